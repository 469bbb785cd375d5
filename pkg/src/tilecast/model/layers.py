"""Network building blocks on top of the autodiff tensor.

Weights draw from the constructor-supplied numpy Generator in construction
order, so a model built from one seed is fully reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def param(data: np.ndarray) -> Tensor:
    return Tensor(np.ascontiguousarray(data), requires_grad=True)


class Module:
    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, scale: float = 1.0):
        k = 1.0 / math.sqrt(d_in)
        self.w = param(rng.uniform(-k, k, size=(d_in, d_out)) * scale)
        self.b = param(rng.uniform(-k, k, size=(d_out,)) * scale)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim > 2:  # flatten leading axes: one large gemm beats many small ones
            shape = x.shape
            flat = x.reshape(-1, shape[-1]) @ self.w + self.b
            return flat.reshape(*shape[:-1], self.w.shape[1])
        return x @ self.w + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = param(np.ones(dim))
        self.bias = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Fully connected stack with ReLU between layers, linear output."""

    def __init__(self, dims, rng: np.random.Generator):
        self.layers = [Linear(a, b, rng) for a, b in zip(dims, dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head projections and output projection."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, out_scale: float = 1.0):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng, scale=out_scale)

    def _split(self, x: Tensor, batch: int, seq: int) -> Tensor:
        return x.reshape(batch, seq, self.n_heads, self.d_head).swapaxes(1, 2)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        if query.ndim != 3 or key.ndim != 3 or value.ndim != 3:
            raise ValueError("attention inputs must be (batch, seq, d_model)")
        if query.shape[-1] != self.d_model or key.shape[-1] != self.d_model:
            raise ValueError(
                f"attention channel dim {query.shape[-1]} != d_model {self.d_model}"
            )
        if key.shape[:2] != value.shape[:2]:
            raise ValueError("key and value sequence shapes differ")
        b, sq = query.shape[0], query.shape[1]
        sk = key.shape[1]
        q = self._split(self.wq(query), b, sq)
        k = self._split(self.wk(key), b, sk)
        v = self._split(self.wv(value), b, sk)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d_head))
        att = T.softmax(scores)
        ctx = att @ v  # (b, heads, sq, d_head)
        merged = ctx.swapaxes(1, 2).reshape(b, sq, self.d_model)
        return self.wo(merged)


class EncoderLayer(Module):
    """Post-norm transformer encoder: LN(x + MSA(x)) then LN(x' + FFN(x'))."""

    def __init__(
        self,
        d_model: int,
        n_heads: int,
        ffn_hidden: int,
        rng: np.random.Generator,
        residual_scale: float = 1.0,
    ):
        self.mha = MultiHeadAttention(d_model, n_heads, rng, out_scale=residual_scale)
        self.ln1 = LayerNorm(d_model)
        self.ffn1 = Linear(d_model, ffn_hidden, rng)
        self.ffn2 = Linear(ffn_hidden, d_model, rng, scale=residual_scale)
        self.ln2 = LayerNorm(d_model)

    def __call__(self, x: Tensor) -> Tensor:
        x1 = self.ln1(x + self.mha(x, x, x))
        return self.ln2(x1 + self.ffn2(T.relu(self.ffn1(x1))))


class EncoderStack(Module):
    def __init__(self, n_layers: int, d_model: int, n_heads: int, ffn_hidden: int, rng):
        # residual projections shrink with depth to keep the post-norm stack stable
        scale = 1.0 / math.sqrt(max(1, 2 * n_layers))
        self.layers = [
            EncoderLayer(d_model, n_heads, ffn_hidden, rng, residual_scale=scale)
            for _ in range(n_layers)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class LSTM(Module):
    """Stacked LSTM; returns the full hidden sequence of the last layer."""

    def __init__(self, d_in: int, hidden: int, n_layers: int, rng: np.random.Generator):
        self.hidden = hidden
        self.wx = []
        self.wh = []
        self.b = []
        k = 1.0 / math.sqrt(hidden)
        for layer in range(n_layers):
            in_dim = d_in if layer == 0 else hidden
            self.wx.append(param(rng.uniform(-k, k, size=(in_dim, 4 * hidden))))
            self.wh.append(param(rng.uniform(-k, k, size=(hidden, 4 * hidden))))
            self.b.append(param(rng.uniform(-k, k, size=(4 * hidden,))))

    def __call__(self, x: Tensor) -> Tensor:
        batch, seq = x.shape[0], x.shape[1]
        dtype = x.dtype
        for layer in range(len(self.wx)):
            h = Tensor(np.zeros((batch, self.hidden), dtype=dtype))
            c = Tensor(np.zeros((batch, self.hidden), dtype=dtype))
            outs = []
            for t in range(seq):
                gates = x[:, t] @ self.wx[layer] + h @ self.wh[layer] + self.b[layer]
                hc = T.lstm_cell(gates, c)
                h = hc[:, : self.hidden]
                c = hc[:, self.hidden :]
                outs.append(h.reshape(batch, 1, self.hidden))
            x = T.concat(outs, axis=1)
        return x


def sinusoid_positions(n: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Fixed sin/cos position table, shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)
