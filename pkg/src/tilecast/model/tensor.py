"""Minimal reverse-mode autodiff over numpy arrays.

Just enough graph machinery for this model family: broadcasting elementwise
ops, batched matmul, shape ops, reductions, and fused kernels (softmax,
layer norm, LSTM cell) that dispatch through :mod:`tilecast.kernels`.

Gradients accumulate on leaf tensors created with ``requires_grad=True``.
Wrap inference in :func:`no_grad` to skip graph construction.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .. import kernels

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._vjp = None

    # -- graph plumbing -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def _accum(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None) -> None:
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative DFS: graphs can be deep (LSTM over time)
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p._vjp is not None or p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad)
        for node in reversed(topo):
            g = node.grad
            if node._vjp is not None and g is not None:
                node._vjp(g)
                if node is not self and not node.requires_grad:
                    node.grad = None  # free intermediate gradients eagerly

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division unsupported; multiply by a reciprocal")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _make(data, parents, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p._vjp is not None or p.requires_grad for p in parents):
        out._parents = parents
        out._vjp = vjp
    return out


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    # python scalars stay weak so float32 graphs are not upcast
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        s = float(b)
        data = a.data + s

        def vjp_s(g):
            a._accum(g)

        return _make(data, (a,), vjp_s)
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _make(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        s = float(b)
        data = a.data * s

        def vjp_s(g):
            a._accum(g * s)

        return _make(data, (a,), vjp_s)
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), vjp)


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0)

    def vjp(g):
        x._accum(g * (x.data > 0))

    return _make(data, (x,), vjp)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def vjp(g):
        x._accum(g * (1.0 - data * data))

    return _make(data, (x,), vjp)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = 1.0 / (1.0 + np.exp(-x.data))

    def vjp(g):
        x._accum(g * data * (1.0 - data))

    return _make(data, (x,), vjp)


def log(x) -> Tensor:
    x = as_tensor(x)
    data = np.log(x.data)

    def vjp(g):
        x._accum(g / x.data)

    return _make(data, (x,), vjp)


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient strictly inside [lo, hi]."""
    x = as_tensor(x)
    data = np.clip(x.data, lo, hi)

    def vjp(g):
        x._accum(g * ((x.data > lo) & (x.data < hi)))

    return _make(data, (x,), vjp)


def square(x) -> Tensor:
    return mul(x, x)


# -- linear algebra / shape -------------------------------------------------


def _tracked(t: Tensor) -> bool:
    return t._vjp is not None or t.requires_grad


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def vjp(g):
        if _tracked(a):
            ga = g @ b.data.swapaxes(-1, -2)
            a._accum(_unbroadcast(ga, a.shape) if ga.shape != a.shape else ga)
        if _tracked(b):
            if b.ndim == 2 and g.ndim > 2:
                # weight grad of a flattened linear: one big 2-d gemm
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = a.data.swapaxes(-1, -2) @ g
            b._accum(_unbroadcast(gb, b.shape) if gb.shape != b.shape else gb)

    return _make(data, (a, b), vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def vjp(g):
        x._accum(g.reshape(x.shape))

    return _make(data, (x,), vjp)


def swapaxes(x, ax1, ax2) -> Tensor:
    x = as_tensor(x)
    data = x.data.swapaxes(ax1, ax2)

    def vjp(g):
        x._accum(g.swapaxes(ax1, ax2))

    return _make(data, (x,), vjp)


def take(x, idx) -> Tensor:
    """Basic indexing/slicing with gradient scatter-add."""
    x = as_tensor(x)
    data = x.data[idx]
    basic = isinstance(idx, (int, slice)) or (
        isinstance(idx, tuple) and all(isinstance(i, (int, slice)) for i in idx)
    )

    def vjp(g):
        full = np.zeros_like(x.data)
        if basic:  # a basic index never repeats elements, so += on the view is safe
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        x._accum(full)

    return _make(data, (x,), vjp)


def concat(parts, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def vjp(g):
        offset = 0
        for p, size in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            p._accum(g[tuple(sl)])
            offset += size

    return _make(data, tuple(parts), vjp)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        x._accum(np.broadcast_to(gg, x.shape).copy())

    return _make(data, (x,), vjp)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis, keepdims), 1.0 / n)


# -- fused kernel ops -------------------------------------------------------


def softmax(x) -> Tensor:
    """Softmax over the last axis (numerically stable, fused kernel)."""
    x = as_tensor(x)
    y = kernels.softmax_fwd(x.data)

    def vjp(g):
        x._accum(kernels.softmax_bwd(g, y))

    return _make(y, (x,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned gain/bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    y, mean, rstd = kernels.layernorm_fwd(x.data, gain.data, bias.data, eps)

    def vjp(g):
        dx, dgain, dbias = kernels.layernorm_bwd(g, x.data, gain.data, mean, rstd)
        x._accum(dx)
        gain._accum(dgain)
        bias._accum(dbias)

    return _make(y, (x, gain, bias), vjp)


def lstm_cell(gates, c_prev) -> Tensor:
    """One LSTM cell step; gates (B, 4H) pre-activations in i,f,g,o order.

    Returns the concatenation [h | c] of shape (B, 2H); slice it apart with
    indexing so the paired (dh, dc) arrive together in the backward pass.
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    h, c, i, f, g_act, o, tc = kernels.lstm_cell_fwd(gates.data, c_prev.data)
    hc = np.concatenate([h, c], axis=-1)
    h_dim = c_prev.shape[-1]

    def vjp(g):
        dh = np.ascontiguousarray(g[:, :h_dim])
        dc = np.ascontiguousarray(g[:, h_dim:])
        dgates, dc_prev = kernels.lstm_cell_bwd(dh, dc, c_prev.data, i, f, g_act, o, tc)
        gates._accum(dgates)
        c_prev._accum(dc_prev)

    return _make(hc, (gates, c_prev), vjp)
