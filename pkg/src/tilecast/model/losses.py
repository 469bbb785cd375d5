"""Training objectives: position regression, tile classification, and their blend."""

from __future__ import annotations

from . import tensor as T
from .network import ModelConfig
from .tensor import Tensor, as_tensor

SCORE_EPS = 1e-7  # clamp keeps log() finite on saturated scores


def loss_pos(head_pred, gt_heads) -> Tensor:
    """Mean over steps (and batch) of the squared error summed over yaw/pitch."""
    hp = as_tensor(head_pred)
    gt = as_tensor(gt_heads)
    if hp.shape != gt.shape:
        raise ValueError(f"prediction shape {hp.shape} != target shape {gt.shape}")
    diff = hp - gt
    return T.square(diff).sum(axis=-1).mean()


def loss_cls(score_maps, gt_masks) -> Tensor:
    """Binary cross-entropy averaged over every tile of every step (and batch)."""
    scores = as_tensor(score_maps)
    target = as_tensor(gt_masks)
    if scores.shape != target.shape:
        raise ValueError(f"score shape {scores.shape} != mask shape {target.shape}")
    s = T.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    y = target.data.astype(s.dtype)
    bce = T.log(s) * y + T.log(1.0 - s) * (1.0 - y)
    return bce.mean() * -1.0


def total_loss(l_pos, l_cls, cfg: ModelConfig) -> Tensor:
    """alpha * position loss + beta * classification loss, honoring ablations."""
    terms = []
    if not cfg.no_position_head:
        if l_pos is None:
            raise ValueError("position loss required unless no_position_head is set")
        terms.append(as_tensor(l_pos) * cfg.alpha)
    if not cfg.no_tile_head:
        if l_cls is None:
            raise ValueError("classification loss required unless no_tile_head is set")
        terms.append(as_tensor(l_cls) * cfg.beta)
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    return out
