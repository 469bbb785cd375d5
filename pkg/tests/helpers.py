"""Shared test utilities: tiny model configs and the full-model gradient check."""

import numpy as np

from tilecast.geometry import TileGrid, ViewportAnchor, viewport_mask
from tilecast.model import ModelConfig, ViewportTransformer, loss_cls, loss_pos, total_loss
from tilecast.model.tensor import no_grad

TINY_GRID = TileGrid(n_rows=2, n_cols=4, vp_rows=1, vp_cols=2, frame_w=8, frame_h=8)


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        history_len=2,
        horizon=2,
        d_model=8,
        c_head=4,
        c_eye=4,
        recurrent_layers=1,
        recurrent_hidden=4,
        n_encoder_layers=1,
        n_attention_heads=2,
        ffn_hidden=16,
        pos_head_hidden=(8, 4),
        tile_head_hidden=8,
        descriptor_dim=12,
    )
    base.update(overrides)
    return ModelConfig(**base)


def small_config(**overrides) -> ModelConfig:
    """Mid-size config for smoke training: big enough to learn, CI-friendly."""
    base = dict(
        d_model=64,
        c_head=32,
        c_eye=32,
        recurrent_layers=2,
        recurrent_hidden=32,
        n_encoder_layers=2,
        n_attention_heads=4,
        ffn_hidden=128,
        pos_head_hidden=(32, 16),
        tile_head_hidden=64,
        descriptor_dim=1000,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_batch(cfg: ModelConfig, grid: TileGrid, seed=0, batch=1):
    rng = np.random.default_rng(seed)
    t, horizon = cfg.history_len, cfg.horizon
    head = rng.uniform(-1.0, 1.0, size=(batch, t, 2))
    eye = rng.uniform(0.0, 1.0, size=(batch, t, 2))
    desc = rng.normal(size=(batch, t + horizon, cfg.descriptor_dim))
    gt_heads = rng.uniform(-1.0, 1.0, size=(batch, horizon, 2))
    masks = np.stack(
        [
            np.stack(
                [
                    viewport_mask(
                        ViewportAnchor(
                            int(rng.integers(0, grid.n_rows - grid.vp_rows + 1)),
                            int(rng.integers(0, grid.n_cols)),
                        ),
                        grid,
                    )
                    for _ in range(horizon)
                ]
            )
            for _ in range(batch)
        ]
    ).astype(np.float64)
    return head, eye, desc, gt_heads, masks


def model_loss(model: ViewportTransformer, batch):
    head, eye, desc, gt_heads, masks = batch
    hp, scores = model.forward_tensors(head, eye, desc)
    lp = None if hp is None else loss_pos(hp, gt_heads.astype(model.dtype))
    lc = None if scores is None else loss_cls(scores, masks.astype(model.dtype))
    return total_loss(lp, lc, model.cfg)


def gradient_check(model: ViewportTransformer, batch, h=1e-5, floor=1e-6, progress=None):
    """Max relative error between backward() grads and central differences,
    over every parameter entry. Model must be float64.

    The denominator carries an absolute floor: central differences of a
    double-precision loss are noise-limited near |loss|*eps/h (~1e-11 here),
    so relative error is meaningless for gradients far below the floor. Any
    entry above it is compared strictly."""
    assert model.dtype == np.float64
    loss = model_loss(model, batch)
    loss.backward()
    grads = {
        # parameters off the active path (ablations) get no grad: that is zero
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in model.named_parameters()
    }
    worst = 0.0
    worst_name = None
    for name, p in model.named_parameters():
        flat = p.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            with no_grad():
                up = model_loss(model, batch).item()
            flat[k] = orig - h
            with no_grad():
                down = model_loss(model, batch).item()
            flat[k] = orig
            numeric = (up - down) / (2 * h)
            analytic = gflat[k]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            if rel > worst:
                worst, worst_name = rel, f"{name}[{k}]"
        if progress:
            progress(name)
    for p in model.parameters():
        p.grad = None
    return worst, worst_name
