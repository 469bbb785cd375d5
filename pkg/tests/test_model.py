import numpy as np
import pytest
from helpers import TINY_GRID, model_loss, tiny_batch, tiny_config

from tilecast.geometry import TileGrid, ViewportAnchor, select_viewport, viewport_mask
from tilecast.model import (
    ModelConfig,
    ViewportTransformer,
    loss_cls,
    loss_pos,
    total_loss,
)
from tilecast.model.layers import sinusoid_positions
from tilecast.model.tensor import Tensor


def make_model(seed=0, dtype=np.float64, grid=TINY_GRID, **cfg_overrides):
    return ViewportTransformer(tiny_config(**cfg_overrides), grid, seed=seed, dtype=dtype)


def ref_layernorm(x, eps=1e-5):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def zero_stack_residuals(stack):
    for layer in stack.layers:
        for lin in (layer.mha.wo, layer.ffn2):
            lin.w.data[:] = 0
            lin.b.data[:] = 0


# --- config validation ---------------------------------------------------------


def test_config_invariants_enforced():
    with pytest.raises(ValueError, match="c_head"):
        tiny_config(c_head=6).validate()
    with pytest.raises(ValueError, match="recurrent_hidden"):
        tiny_config(recurrent_hidden=3).validate()
    with pytest.raises(ValueError, match="divisible"):
        tiny_config(n_attention_heads=3).validate()
    with pytest.raises(ValueError, match="horizon"):
        tiny_config(horizon=3).validate()
    with pytest.raises(ValueError, match="gamma"):
        tiny_config(gamma=1.2).validate()
    with pytest.raises(ValueError, match="no output path"):
        tiny_config(no_tile_head=True, no_position_head=True).validate()
    with pytest.raises(ValueError, match="finetune"):
        tiny_config(finetune_extractor=True).validate()
    with pytest.raises(ValueError, match="unknown model config key"):
        ModelConfig.from_dict({"d_model": 8, "bogus": 1})


def test_config_defaults_match_published_values():
    cfg = ModelConfig()
    assert (cfg.history_len, cfg.horizon) == (5, 5)
    assert cfg.d_model == 512 and cfg.c_head == 256 and cfg.c_eye == 256
    assert cfg.recurrent_layers == 3 and cfg.recurrent_hidden == 256
    assert cfg.n_encoder_layers == 6
    assert cfg.pos_head_hidden == (128, 64)
    assert (cfg.gamma, cfg.alpha, cfg.beta) == (0.55, 0.35, 0.65)
    cfg.validate()


# --- temporal branch -------------------------------------------------------------


def test_temporal_branch_shape():
    model = make_model()
    head, eye, *_ = tiny_batch(model.cfg, TINY_GRID, batch=3)
    out = model.temporal_branch(head, eye)
    assert out.shape == (3, 2, 8)


def test_temporal_branch_eye_sensitivity():
    model = make_model(seed=1)
    head, eye, *_ = tiny_batch(model.cfg, TINY_GRID, batch=1)
    out_a = model.temporal_branch(head, eye).data
    out_b = model.temporal_branch(head, eye + 0.25).data
    assert not np.allclose(out_a, out_b)


def test_temporal_branch_passthrough_composition():
    model = make_model(seed=2)
    zero_stack_residuals(model.temporal_encoder)
    head, eye, *_ = tiny_batch(model.cfg, TINY_GRID, batch=2)
    from tilecast.model import tensor as T

    h = model.lstm_head(model.fc_head(Tensor(head)))
    e = model.lstm_eye(model.fc_eye(Tensor(eye)))
    recurrent = T.concat([h, e], axis=2).data
    out = model.temporal_branch(head, eye).data
    np.testing.assert_allclose(out, ref_layernorm(ref_layernorm(recurrent)), atol=1e-10)


def test_temporal_branch_rejects_nonfinite():
    model = make_model()
    head, eye, *_ = tiny_batch(model.cfg, TINY_GRID)
    head[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        model.temporal_branch(head, eye)


def test_temporal_ablation_returns_recurrent_features():
    base = make_model(seed=3)
    ablated = make_model(seed=3, no_temporal_transformer=True)
    head, eye, *_ = tiny_batch(base.cfg, TINY_GRID)
    from tilecast.model import tensor as T

    h = base.lstm_head(base.fc_head(Tensor(head)))
    e = base.lstm_eye(base.fc_eye(Tensor(eye)))
    expected = T.concat([h, e], axis=2).data
    np.testing.assert_array_equal(ablated.temporal_branch(head, eye).data, expected)


# --- visual branch ---------------------------------------------------------------


def test_visual_branch_shape_from_descriptors():
    model = make_model()
    _, _, desc, *_ = tiny_batch(model.cfg, TINY_GRID, batch=2)
    assert model.visual_branch(desc).shape == (2, 4, 8)


def test_visual_branch_accepts_raw_frames():
    model = make_model()
    frames = np.random.default_rng(0).integers(
        0, 255, size=(1, 4, TINY_GRID.frame_h, TINY_GRID.frame_w, 3), dtype=np.uint8
    )
    # stub extractor output dim must match descriptor_dim
    assert model.extractor.dim == model.cfg.descriptor_dim
    assert model.visual_branch(frames).shape == (1, 4, 8)


def test_visual_branch_rejects_wrong_descriptor_dim():
    model = make_model()
    with pytest.raises(ValueError, match="descriptor dim"):
        model.visual_branch(np.zeros((1, 4, 7)))
    with pytest.raises(ValueError, match="frames"):
        model.visual_branch(np.zeros((1, 3, 12)))


def test_visual_position_embeddings_differentiate_identical_frames():
    model = make_model(seed=4, no_visual_transformer=True)
    desc = np.tile(np.random.default_rng(1).normal(size=(1, 1, 12)), (1, 4, 1))
    out = model.visual_branch(desc).data[0]
    # same descriptor everywhere: rows differ only by the (scaled) position table
    diffs = out - (np.asarray(desc[0]) @ model.visual_reduce.w.data + model.visual_reduce.b.data)
    np.testing.assert_allclose(diffs, sinusoid_positions(4, 8) / np.sqrt(8), atol=1e-10)
    assert not np.allclose(out[0], out[1])


# --- fusion ----------------------------------------------------------------------


def test_fuse_output_shape():
    model = make_model()
    batch = tiny_batch(model.cfg, TINY_GRID, batch=2)
    tf = model.temporal_branch(batch[0], batch[1])
    v = model.visual_branch(batch[2])
    assert model.fuse(tf, v).shape == (2, 2, 8)


def test_fuse_passthrough_is_double_layernorm_of_typed_visual_rows():
    model = make_model(seed=5, fusion_temporal_positions=False)
    zero_stack_residuals(model.fusion_encoder)
    batch = tiny_batch(model.cfg, TINY_GRID, batch=1)
    tf = model.temporal_branch(batch[0], batch[1])
    v = model.visual_branch(batch[2])
    out = model.fuse(tf, v).data
    expected = ref_layernorm(ref_layernorm(v.data[:, 2:] + model.type_visual.data))
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_fuse_cross_modal_sensitivity():
    model = make_model(seed=6)
    batch = tiny_batch(model.cfg, TINY_GRID, batch=1)
    tf = model.temporal_branch(batch[0], batch[1])
    v = model.visual_branch(batch[2])
    out_a = model.fuse(tf, v).data
    out_b = model.fuse(Tensor(tf.data + 0.5), v).data
    assert not np.allclose(out_a, out_b)


def test_fuse_no_fusion_fallback():
    model = make_model(seed=7, no_fusion=True)
    batch = tiny_batch(model.cfg, TINY_GRID, batch=2)
    tf = model.temporal_branch(batch[0], batch[1])
    v = model.visual_branch(batch[2])
    expected = v.data[:, 2:] + tf.data.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(model.fuse(tf, v).data, expected, atol=1e-12)


def test_fuse_sum_mode_single_temporal_token():
    model = make_model(seed=8, fusion_temporal_mode="sum")
    batch = tiny_batch(model.cfg, TINY_GRID, batch=1)
    tf = model.temporal_branch(batch[0], batch[1])
    v = model.visual_branch(batch[2])
    assert model.fuse(tf, v).shape == (1, 2, 8)


# --- heads -----------------------------------------------------------------------


def test_position_head_shape_and_row_selection():
    model = make_model(seed=9, history_len=5, horizon=3)
    tf = Tensor(np.random.default_rng(2).normal(size=(1, 5, 8)))
    out = model.position_head_out(tf)
    assert out.shape == (1, 3, 2)
    full = model.pos_head(tf).data
    np.testing.assert_array_equal(out.data, full[:, 2:5])


def test_position_head_zero_weights_zero_output():
    model = make_model(seed=10)
    for lin in model.pos_head.layers:
        lin.w.data[:] = 0
        lin.b.data[:] = 0
    tf = Tensor(np.random.default_rng(3).normal(size=(1, 2, 8)))
    np.testing.assert_array_equal(model.position_head_out(tf).data, np.zeros((1, 2, 2)))


def test_tile_head_shapes_and_default_scores():
    model = make_model(seed=11)
    fused = Tensor(np.random.default_rng(4).normal(size=(2, 2, 8)))
    scores = model.tile_head_scores(fused)
    assert scores.shape == (2, 2, 2, 4)
    assert (scores.data > 0).all() and (scores.data < 1).all()
    # all-zero final layer -> sigmoid(0) = 0.5 everywhere
    model.tile_head.layers[-1].w.data[:] = 0
    model.tile_head.layers[-1].b.data[:] = 0
    flat = model.tile_head_scores(fused).data
    np.testing.assert_allclose(flat, 0.5, atol=1e-12)
    # paper threshold gamma=0.55 turns the 0.5 map into an all-zero interest mask
    assert not (flat > 0.55).any()


def test_default_grid_tile_head_is_10x20():
    cfg = tiny_config()
    model = ViewportTransformer(cfg, TileGrid(), seed=0, dtype=np.float64)
    fused = Tensor(np.random.default_rng(5).normal(size=(1, 2, 8)))
    assert model.tile_head_scores(fused).shape == (1, 2, 10, 20)


# --- losses ----------------------------------------------------------------------


def test_loss_pos_zero_at_target():
    gt = np.random.default_rng(6).normal(size=(1, 3, 2))
    assert loss_pos(gt, gt).item() == 0.0


def test_loss_pos_squared_euclidean():
    hp = np.array([[[0.0, 0.0]]])
    gt = np.array([[[3.0, 4.0]]])
    assert loss_pos(hp, gt).item() == pytest.approx(25.0, abs=1e-12)


def test_loss_pos_quadratic_scaling():
    rng = np.random.default_rng(7)
    hp = rng.normal(size=(2, 4, 2))
    gt = rng.normal(size=(2, 4, 2))
    base = loss_pos(hp, gt).item()
    doubled = loss_pos(gt + 2 * (hp - gt), gt).item()
    assert doubled == pytest.approx(4 * base, rel=1e-12)


def test_loss_pos_shape_mismatch():
    with pytest.raises(ValueError):
        loss_pos(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)))


def test_loss_cls_zero_at_target():
    rng = np.random.default_rng(8)
    masks = (rng.random((1, 2, 4, 4)) < 0.3).astype(np.float64)
    eps = 1e-7
    scores = np.clip(masks, eps, 1 - eps)
    assert loss_cls(scores, masks).item() <= 1e-6


def test_loss_cls_uniform_half_is_ln2():
    rng = np.random.default_rng(9)
    masks = (rng.random((2, 3, 5, 5)) < 0.5).astype(np.float64)
    scores = np.full_like(masks, 0.5)
    assert loss_cls(scores, masks).item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_loss_cls_matches_hand_computed_toy_case():
    scores = np.array([[[[0.9, 0.2], [0.6, 0.4]]]])
    masks = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
    expected = -(np.log(0.9) + np.log(0.8) + np.log(0.4) + np.log(0.4)) / 4.0
    assert loss_cls(scores, masks).item() == pytest.approx(expected, rel=1e-12)


def test_total_loss_paper_weights():
    cfg = tiny_config()
    assert total_loss(1.0, 1.0, cfg).item() == pytest.approx(1.0, abs=1e-15)
    assert total_loss(2.0, 3.0, cfg).item() == pytest.approx(
        2 * total_loss(1.0, 1.5, cfg).item(), rel=1e-12
    )


def test_total_loss_ablations():
    cfg_pos_off = tiny_config(no_position_head=True)
    assert total_loss(None, 2.0, cfg_pos_off).item() == pytest.approx(0.65 * 2.0)
    cfg_tile_off = tiny_config(no_tile_head=True)
    assert total_loss(3.0, None, cfg_tile_off).item() == pytest.approx(0.35 * 3.0)
    with pytest.raises(ValueError):
        total_loss(None, 1.0, tiny_config())


# --- forward ---------------------------------------------------------------------


def test_forward_shapes_and_determinism():
    model = make_model(seed=12)
    batch = tiny_batch(model.cfg, TINY_GRID, batch=2)
    res1 = model.forward(batch[0], batch[1], batch[2])
    res2 = model.forward(batch[0], batch[1], batch[2])
    assert res1.head_pred.shape == (2, 2, 2)
    assert res1.score_maps.shape == (2, 2, 2, 4)
    assert res1.anchors.shape == (2, 2, 2)
    np.testing.assert_array_equal(res1.head_pred, res2.head_pred)
    np.testing.assert_array_equal(res1.score_maps, res2.score_maps)
    np.testing.assert_array_equal(res1.anchors, res2.anchors)


def test_forward_unbatched_squeezes():
    model = make_model(seed=13)
    batch = tiny_batch(model.cfg, TINY_GRID, batch=1)
    res = model.forward(batch[0][0], batch[1][0], batch[2][0])
    assert res.head_pred.shape == (2, 2)
    assert res.score_maps.shape == (2, 2, 4)
    assert res.anchors.shape == (2, 2)


def test_anchor_selection_from_scaled_viewport_mask():
    grid = TileGrid()
    model = ViewportTransformer(tiny_config(), grid, seed=0, dtype=np.float64)
    mask = viewport_mask(ViewportAnchor(3, 5), grid).astype(np.float64) * 0.9
    anchors = model.select_anchors(mask[None, None])
    assert tuple(anchors[0, 0]) == (3, 5)
    assert select_viewport((mask > 0.55).astype(np.uint8), grid) == ViewportAnchor(3, 5)


def test_no_tile_head_uses_trajectory_fallback():
    model = make_model(seed=14, no_tile_head=True, grid=TileGrid())
    batch = tiny_batch(model.cfg, TileGrid(), batch=1)
    res = model.forward(batch[0], batch[1], batch[2])
    assert res.score_maps is None
    from tilecast.geometry import nearest_viewport_batch

    yaw = np.mod(res.head_pred[..., 0] + np.pi, 2 * np.pi) - np.pi
    pitch = np.clip(res.head_pred[..., 1], -np.pi / 2, np.pi / 2)
    rows, cols = nearest_viewport_batch(yaw.reshape(-1), pitch.reshape(-1), TileGrid())
    np.testing.assert_array_equal(res.anchors.reshape(-1, 2), np.stack([rows, cols], axis=1))


def test_no_position_head_keeps_tile_path_bitwise():
    base = make_model(seed=15)
    ablated = make_model(seed=15, no_position_head=True)
    batch = tiny_batch(base.cfg, TINY_GRID, batch=2, seed=5)
    res_base = base.forward(batch[0], batch[1], batch[2])
    res_ablated = ablated.forward(batch[0], batch[1], batch[2])
    assert res_ablated.head_pred is None
    np.testing.assert_array_equal(res_base.score_maps, res_ablated.score_maps)
    np.testing.assert_array_equal(res_base.anchors, res_ablated.anchors)


def test_forward_finite_on_random_inputs():
    # no NaN/Inf across 100 random seeds
    model = make_model(seed=16)
    for seed in range(100):
        batch = tiny_batch(model.cfg, TINY_GRID, seed=seed)
        res = model.forward(batch[0], batch[1], batch[2])
        assert np.isfinite(res.head_pred).all()
        assert np.isfinite(res.score_maps).all()
        assert (res.score_maps >= 0).all() and (res.score_maps <= 1).all()


def test_threshold_monotonicity():
    rng = np.random.default_rng(17)
    for _ in range(100):
        scores = rng.random((2, 4))
        low = scores > 0.55
        high = scores > 0.75
        assert not (high & ~low).any()  # raising gamma only shrinks the set


def test_selection_invariant_under_threshold_preserving_transforms():
    grid = TileGrid()
    model = ViewportTransformer(tiny_config(), grid, seed=0, dtype=np.float64)
    rng = np.random.default_rng(18)
    gamma = model.cfg.gamma
    for _ in range(20):
        scores = rng.random((1, 1, 10, 20))
        base = model.select_anchors(scores)
        # affine map fixing gamma: s -> gamma + a*(s - gamma), a > 0 keeps the
        # crossing set; clip to [0, 1] keeps it a valid score map
        for a in (0.25, 0.9):
            warped = np.clip(gamma + a * (scores - gamma), 0.0, 1.0)
            np.testing.assert_array_equal(model.select_anchors(warped), base)


def test_model_loss_runs_under_every_single_ablation():
    for flag in (
        "no_temporal_transformer",
        "no_position_head",
        "no_visual_transformer",
        "no_fusion",
        "no_tile_head",
    ):
        model = make_model(seed=19, **{flag: True})
        batch = tiny_batch(model.cfg, TINY_GRID, batch=2)
        loss = model_loss(model, batch)
        assert np.isfinite(loss.item())
