"""The viewport prediction network.

Two modality branches feed a fusion transformer:

* temporal: head and gaze histories are lifted per-modality by linear
  layers, encoded by stacked LSTMs, concatenated channel-wise and refined by
  a transformer encoder stack;
* visual: per-frame descriptors are reduced to the model width, stamped with
  sinusoidal positions and refined by a second encoder stack.

Fusion runs a third encoder stack over [temporal tokens | visual tokens]
with learned modality-type embeddings; the outputs at the future-frame
positions drive two heads: a position regressor (training-time supervision
of the temporal branch) and a per-tile interest classifier whose thresholded
score maps pick the viewport with the most interesting tiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from ..geometry import TileGrid, nearest_viewport_batch, select_viewport_batch
from . import tensor as T
from .extractor import get_extractor
from .layers import LSTM, EncoderStack, Linear, MLP, Module, param, sinusoid_positions
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class ModelConfig:
    history_len: int = 5  # observed trace seconds
    horizon: int = 5  # predicted seconds; at most history_len
    d_model: int = 512
    c_head: int = 256
    c_eye: int = 256
    recurrent_layers: int = 3
    recurrent_hidden: int = 256
    n_encoder_layers: int = 6
    n_attention_heads: int = 8
    ffn_hidden: int = 2048
    pos_head_hidden: tuple[int, ...] = (128, 64)
    tile_head_hidden: int = 256
    descriptor_dim: int = 1000
    gamma: float = 0.55  # tile-interest threshold
    alpha: float = 0.35  # position-loss weight
    beta: float = 0.65  # classification-loss weight
    extractor: str = "stub"
    finetune_extractor: bool = False
    fusion_temporal_mode: str = "sequence"  # or "sum": collapse temporal tokens to one
    fusion_temporal_positions: bool = True
    no_temporal_transformer: bool = False
    no_position_head: bool = False
    no_visual_transformer: bool = False
    no_fusion: bool = False
    no_tile_head: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pos_head_hidden", tuple(self.pos_head_hidden))

    def validate(self) -> None:
        if self.c_head + self.c_eye != self.d_model:
            raise ValueError(
                f"c_head + c_eye must equal d_model ({self.c_head}+{self.c_eye} != {self.d_model})"
            )
        if 2 * self.recurrent_hidden != self.d_model:
            raise ValueError(
                f"2 * recurrent_hidden must equal d_model (got {self.recurrent_hidden} vs {self.d_model})"
            )
        if self.d_model % self.n_attention_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_attention_heads {self.n_attention_heads}"
            )
        if self.horizon > self.history_len:
            raise ValueError(f"horizon {self.horizon} exceeds history_len {self.history_len}")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma {self.gamma} must lie strictly in (0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.fusion_temporal_mode not in ("sequence", "sum"):
            raise ValueError(f"fusion_temporal_mode {self.fusion_temporal_mode!r} invalid")
        if self.no_tile_head and self.no_position_head:
            raise ValueError("no_tile_head and no_position_head together leave no output path")
        if self.finetune_extractor:
            raise ValueError(
                "finetune_extractor is not supported: extractors are frozen feature maps"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config key(s): {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class ForwardResult:
    head_pred: np.ndarray | None  # (B, T, 2) predicted yaw/pitch
    score_maps: np.ndarray | None  # (B, T, n_rows, n_cols) in [0, 1]
    anchors: np.ndarray  # (B, T, 2) selected viewport anchors


def _as_batched(x: np.ndarray | Tensor, base_ndim: int):
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.ndim == base_ndim:
        return arr[None], True
    if arr.ndim == base_ndim + 1:
        return arr, False
    raise ValueError(f"expected array of {base_ndim} or {base_ndim + 1} dims, got {arr.ndim}")


class ViewportTransformer(Module):
    def __init__(
        self,
        cfg: ModelConfig,
        grid: TileGrid | None = None,
        seed: int = 0,
        dtype=np.float32,
    ):
        cfg.validate()
        self.cfg = cfg
        self.grid = grid or TileGrid()
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(seed))
        c = cfg
        # every component is constructed regardless of ablation flags so that
        # models sharing a seed share weights; flags only change routing
        self.fc_head = Linear(2, c.c_head, rng)
        self.fc_eye = Linear(2, c.c_eye, rng)
        self.lstm_head = LSTM(c.c_head, c.recurrent_hidden, c.recurrent_layers, rng)
        self.lstm_eye = LSTM(c.c_eye, c.recurrent_hidden, c.recurrent_layers, rng)
        self.temporal_encoder = EncoderStack(
            c.n_encoder_layers, c.d_model, c.n_attention_heads, c.ffn_hidden, rng
        )
        self.visual_reduce = Linear(c.descriptor_dim, c.d_model, rng)
        self.visual_encoder = EncoderStack(
            c.n_encoder_layers, c.d_model, c.n_attention_heads, c.ffn_hidden, rng
        )
        self.type_temporal = param(rng.normal(0.0, 0.02, size=(c.d_model,)))
        self.type_visual = param(rng.normal(0.0, 0.02, size=(c.d_model,)))
        self.fusion_encoder = EncoderStack(
            c.n_encoder_layers, c.d_model, c.n_attention_heads, c.ffn_hidden, rng
        )
        self.pos_head = MLP([c.d_model, *c.pos_head_hidden, 2], rng)
        self.tile_head = MLP(
            [c.d_model, c.tile_head_hidden, self.grid.n_rows * self.grid.n_cols], rng
        )
        self.extractor = get_extractor(c.extractor, dim=c.descriptor_dim)
        self.cast_(self.dtype)

    def cast_(self, dtype) -> None:
        self.dtype = np.dtype(dtype)
        for p in self.parameters():
            p.data = np.ascontiguousarray(p.data.astype(self.dtype, copy=False))

    # -- branches -----------------------------------------------------------

    def temporal_branch(self, head_hist, eye_hist) -> Tensor:
        """(B, t, 2) head and eye histories -> (B, t, d_model) temporal features."""
        h_arr, _ = _as_batched(head_hist, 2)
        e_arr, _ = _as_batched(eye_hist, 2)
        if h_arr.shape[1] != self.cfg.history_len or h_arr.shape[2] != 2:
            raise ValueError(f"head history shape {h_arr.shape[1:]} != ({self.cfg.history_len}, 2)")
        if e_arr.shape != h_arr.shape:
            raise ValueError("head and eye histories must share shape")
        if not (np.isfinite(h_arr).all() and np.isfinite(e_arr).all()):
            raise ValueError("non-finite values in temporal inputs")
        h = Tensor(h_arr.astype(self.dtype, copy=False))
        e = Tensor(e_arr.astype(self.dtype, copy=False))
        h = self.lstm_head(self.fc_head(h))
        e = self.lstm_eye(self.fc_eye(e))
        feats = T.concat([h, e], axis=2)
        if self.cfg.no_temporal_transformer:
            return feats
        return self.temporal_encoder(feats)

    def _descriptors(self, frames) -> np.ndarray:
        arr = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
        if arr.ndim in (4, 5):  # raw images: (S, H, W, 3) or (B, S, H, W, 3)
            imgs, _ = _as_batched(arr, 4)
            b, s = imgs.shape[:2]
            flat = imgs.reshape(b * s, *imgs.shape[2:])
            desc = self.extractor.extract(flat).reshape(b, s, -1)
            return desc
        desc, _ = _as_batched(arr, 2)
        return desc

    def _position_table(self, n: int) -> np.ndarray:
        # scaled so positions perturb rather than drown the content rows
        scale = 1.0 / math.sqrt(self.cfg.d_model)
        return sinusoid_positions(n, self.cfg.d_model, self.dtype) * self.dtype.type(scale)

    def visual_branch(self, frames) -> Tensor:
        """(B, t+T) frames or descriptors -> (B, t+T, d_model) visual features."""
        desc = self._descriptors(frames)
        span = self.cfg.history_len + self.cfg.horizon
        if desc.shape[1] != span:
            raise ValueError(f"expected {span} frames, got {desc.shape[1]}")
        if desc.shape[2] != self.cfg.descriptor_dim:
            raise ValueError(
                f"descriptor dim {desc.shape[2]} != configured {self.cfg.descriptor_dim}"
            )
        v = self.visual_reduce(Tensor(desc.astype(self.dtype, copy=False)))
        v = v + Tensor(self._position_table(span))
        if self.cfg.no_visual_transformer:
            return v
        return self.visual_encoder(v)

    def fuse(self, temporal_feats: Tensor, visual_feats: Tensor) -> Tensor:
        """Joint encoding; returns features at the T future-frame positions."""
        t_len = self.cfg.history_len
        horizon = self.cfg.horizon
        if self.cfg.no_fusion:
            # documented fallback: future visual rows plus broadcast temporal mean
            return visual_feats[:, t_len:] + temporal_feats.mean(axis=1, keepdims=True)
        tokens = temporal_feats + self.type_temporal
        if self.cfg.fusion_temporal_positions:
            tokens = tokens + Tensor(self._position_table(t_len))
        if self.cfg.fusion_temporal_mode == "sum":
            tokens = tokens.sum(axis=1, keepdims=True)
        joint = T.concat([tokens, visual_feats + self.type_visual], axis=1)
        fused = self.fusion_encoder(joint)
        return fused[:, fused.shape[1] - horizon :]

    # -- heads ----------------------------------------------------------------

    def position_head_out(self, temporal_feats: Tensor) -> Tensor:
        """Per-step position MLP over all t rows, keeping the last T rows."""
        out = self.pos_head(temporal_feats)
        return out[:, self.cfg.history_len - self.cfg.horizon :]

    def tile_head_scores(self, fused: Tensor) -> Tensor:
        """(B, T, d_model) fused features -> (B, T, n_rows, n_cols) sigmoid scores."""
        logits = self.tile_head(fused)
        b, horizon = logits.shape[0], logits.shape[1]
        return T.sigmoid(logits).reshape(b, horizon, self.grid.n_rows, self.grid.n_cols)

    # -- full pipeline ----------------------------------------------------------

    def forward_tensors(self, head_hist, eye_hist, frames):
        """Differentiable forward: (head_pred Tensor | None, scores Tensor | None)."""
        temporal = self.temporal_branch(head_hist, eye_hist)
        head_pred = None if self.cfg.no_position_head else self.position_head_out(temporal)
        scores = None
        if not self.cfg.no_tile_head:
            visual = self.visual_branch(frames)
            fused = self.fuse(temporal, visual)
            scores = self.tile_head_scores(fused)
        return head_pred, scores

    def select_anchors(self, score_maps: np.ndarray) -> np.ndarray:
        """Threshold score maps at gamma and pick the densest viewport per step."""
        b, horizon = score_maps.shape[:2]
        interest = (score_maps > self.cfg.gamma).astype(np.uint8)
        rows, cols = select_viewport_batch(
            interest.reshape(b * horizon, self.grid.n_rows, self.grid.n_cols), self.grid
        )
        return np.stack([rows, cols], axis=1).reshape(b, horizon, 2)

    def _trajectory_anchors(self, head_pred: np.ndarray) -> np.ndarray:
        b, horizon = head_pred.shape[:2]
        yaw = np.mod(head_pred[..., 0] + math.pi, 2 * math.pi) - math.pi
        pitch = np.clip(head_pred[..., 1], -math.pi / 2, math.pi / 2)
        rows, cols = nearest_viewport_batch(yaw.reshape(-1), pitch.reshape(-1), self.grid)
        return np.stack([rows, cols], axis=1).reshape(b, horizon, 2)

    def forward(self, head_hist, eye_hist, frames) -> ForwardResult:
        """Inference: predicted head track, score maps, and selected anchors."""
        _, unbatched = _as_batched(
            head_hist.data if isinstance(head_hist, Tensor) else np.asarray(head_hist), 2
        )
        with no_grad():
            head_pred_t, scores_t = self.forward_tensors(head_hist, eye_hist, frames)
        head_pred = None if head_pred_t is None else head_pred_t.data
        scores = None if scores_t is None else scores_t.data
        if self.cfg.no_tile_head:
            anchors = self._trajectory_anchors(head_pred)
        else:
            anchors = self.select_anchors(scores)
        if unbatched:
            head_pred = None if head_pred is None else head_pred[0]
            scores = None if scores is None else scores[0]
            anchors = anchors[0]
        return ForwardResult(head_pred, scores, anchors)


def ablation_variant(cfg: ModelConfig, **flags) -> ModelConfig:
    """Config copy with ablation flags or overrides applied (validated)."""
    out = replace(cfg, **flags)
    out.validate()
    return out
