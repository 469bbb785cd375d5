import numpy as np
import pytest

from tilecast.model.layers import (
    LSTM,
    EncoderLayer,
    EncoderStack,
    Linear,
    MLP,
    MultiHeadAttention,
    sinusoid_positions,
)
from tilecast.model.tensor import Tensor

RNG = np.random.default_rng(2024)


def ref_layernorm(x, eps=1e-5):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def zero_residual_branches(layer: EncoderLayer):
    for lin in (layer.mha.wo, layer.ffn2):
        lin.w.data[:] = 0
        lin.b.data[:] = 0


def ref_multi_head_attention(x, mha: MultiHeadAttention):
    """Straight-line evaluation with explicit per-head weight slices."""
    wq, bq = mha.wq.w.data, mha.wq.b.data
    wk, bk = mha.wk.w.data, mha.wk.b.data
    wv, bv = mha.wv.w.data, mha.wv.b.data
    dk = mha.d_head
    heads = []
    for h in range(mha.n_heads):
        sl = slice(h * dk, (h + 1) * dk)
        q = x @ wq[:, sl] + bq[sl]
        k = x @ wk[:, sl] + bk[sl]
        v = x @ wv[:, sl] + bv[sl]
        scores = q @ k.T / np.sqrt(dk)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        att = e / e.sum(axis=-1, keepdims=True)
        heads.append(att @ v)
    return np.concatenate(heads, axis=-1) @ mha.wo.w.data + mha.wo.b.data


# --- multi-head attention ----------------------------------------------------


def test_attention_identity_weights_single_row_passthrough():
    mha = MultiHeadAttention(4, 1, np.random.default_rng(0))
    for lin in (mha.wq, mha.wk, mha.wv, mha.wo):
        lin.w.data = np.eye(4)
        lin.b.data = np.zeros(4)
    x = Tensor(np.array([[[0.3, -1.2, 2.0, 0.7]]]))
    out = mha(x, x, x)
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)


def test_attention_identical_keys_average_values():
    # two identical key/value rows: weights are (0.5, 0.5) for any query,
    # so the context equals the shared value row
    mha = MultiHeadAttention(4, 2, np.random.default_rng(1))
    row = RNG.normal(size=4)
    kv = Tensor(np.stack([row, row])[None])
    for query_scale in (0.1, 5.0):
        q = Tensor(RNG.normal(size=(1, 3, 4)) * query_scale)
        out = mha(q, kv, kv)
        # undo the output projection to inspect the raw context
        raw = (out.data[0] - mha.wo.b.data) @ np.linalg.inv(mha.wo.w.data)
        expected_ctx = np.concatenate(
            [
                row @ mha.wv.w.data[:, :2] + mha.wv.b.data[:2],
                row @ mha.wv.w.data[:, 2:] + mha.wv.b.data[2:],
            ]
        )
        np.testing.assert_allclose(raw, np.tile(expected_ctx, (3, 1)), atol=1e-10)


def test_attention_matches_straight_line_oracle():
    mha = MultiHeadAttention(4, 2, np.random.default_rng(7))
    x = RNG.normal(size=(3, 4))
    out = mha(Tensor(x[None]), Tensor(x[None]), Tensor(x[None]))
    np.testing.assert_allclose(out.data[0], ref_multi_head_attention(x, mha), atol=1e-12)


def test_attention_rejects_shape_mismatch():
    mha = MultiHeadAttention(4, 2, np.random.default_rng(0))
    ok = Tensor(np.zeros((1, 3, 4)))
    with pytest.raises(ValueError):
        mha(Tensor(np.zeros((1, 3, 6))), ok, ok)
    with pytest.raises(ValueError):
        mha(Tensor(np.zeros((3, 4))), ok, ok)
    with pytest.raises(ValueError):
        MultiHeadAttention(6, 4, np.random.default_rng(0))


def test_attention_output_shape_matches_query():
    mha = MultiHeadAttention(8, 2, np.random.default_rng(3))
    q = Tensor(RNG.normal(size=(2, 5, 8)))
    kv = Tensor(RNG.normal(size=(2, 9, 8)))
    assert mha(q, kv, kv).shape == (2, 5, 8)


# --- encoder layer -------------------------------------------------------------


def test_encoder_zeroed_residuals_is_double_layernorm():
    layer = EncoderLayer(6, 2, 12, np.random.default_rng(5))
    zero_residual_branches(layer)
    x = RNG.normal(size=(2, 4, 6))
    out = layer(Tensor(x))
    np.testing.assert_allclose(out.data, ref_layernorm(ref_layernorm(x)), atol=1e-10)


@pytest.mark.parametrize("seq", [1, 2, 17, 64])
def test_encoder_shape_contract(seq):
    layer = EncoderLayer(8, 4, 16, np.random.default_rng(6))
    x = Tensor(RNG.normal(size=(1, seq, 8)))
    assert layer(x).shape == (1, seq, 8)


def test_encoder_gradient_matches_finite_differences():
    layer = EncoderLayer(6, 2, 10, np.random.default_rng(8))
    local = np.random.default_rng(4096)
    x = local.normal(size=(1, 3, 6))
    w = local.normal(size=(1, 3, 6))

    def run():
        return (layer(Tensor(x)) * Tensor(w)).sum()

    out = run()
    out.backward()
    h = 1e-5
    for name, p in layer.named_parameters():
        analytic = p.grad
        flat = p.data.reshape(-1)
        for k in range(0, flat.size, max(1, flat.size // 5)):  # probe a spread of entries
            orig = flat[k]
            flat[k] = orig + h
            up = run().item()
            flat[k] = orig - h
            down = run().item()
            flat[k] = orig
            numeric = (up - down) / (2 * h)
            a = analytic.reshape(-1)[k]
            denom = max(abs(a), abs(numeric), 1e-8)
            assert abs(a - numeric) / denom < 1e-4, f"{name}[{k}]: {a} vs {numeric}"


# --- LSTM / MLP / positions ------------------------------------------------------


def test_lstm_shapes_and_determinism():
    lstm = LSTM(3, 5, 2, np.random.default_rng(9))
    x = Tensor(RNG.normal(size=(4, 6, 3)))
    out1 = lstm(x)
    out2 = lstm(x)
    assert out1.shape == (4, 6, 5)
    np.testing.assert_array_equal(out1.data, out2.data)


def test_lstm_initial_step_ignores_future():
    lstm = LSTM(2, 4, 1, np.random.default_rng(10))
    a = RNG.normal(size=(1, 5, 2))
    b = a.copy()
    b[:, 3:] += 1.0  # perturb the tail only
    out_a = lstm(Tensor(a)).data
    out_b = lstm(Tensor(b)).data
    np.testing.assert_allclose(out_a[:, :3], out_b[:, :3], atol=1e-12)
    assert not np.allclose(out_a[:, 3:], out_b[:, 3:])


def test_mlp_zero_weights_give_zero_output():
    mlp = MLP([6, 4, 2], np.random.default_rng(11))
    for lin in mlp.layers:
        lin.w.data[:] = 0
        lin.b.data[:] = 0
    out = mlp(Tensor(RNG.normal(size=(3, 6))))
    np.testing.assert_array_equal(out.data, np.zeros((3, 2)))


def test_linear_bias_and_shape():
    lin = Linear(3, 2, np.random.default_rng(12))
    x = RNG.normal(size=(5, 3))
    np.testing.assert_allclose(lin(Tensor(x)).data, x @ lin.w.data + lin.b.data, atol=1e-12)


def test_sinusoid_positions_distinct_rows():
    table = sinusoid_positions(10, 16)
    assert table.shape == (10, 16)
    for i in range(10):
        for j in range(i + 1, 10):
            assert not np.allclose(table[i], table[j])
    # even columns are sines (0 at pos 0), odd are cosines (1 at pos 0)
    np.testing.assert_allclose(table[0, 0::2], 0.0, atol=1e-12)
    np.testing.assert_allclose(table[0, 1::2], 1.0, atol=1e-12)


def test_encoder_stack_depth():
    stack = EncoderStack(3, 6, 2, 12, np.random.default_rng(13))
    assert len(stack.layers) == 3
    x = Tensor(RNG.normal(size=(1, 4, 6)))
    assert stack(x).shape == (1, 4, 6)


def test_named_parameters_stable_and_unique():
    layer = EncoderLayer(6, 2, 10, np.random.default_rng(14))
    names = [n for n, _ in layer.named_parameters()]
    assert len(names) == len(set(names))
    assert names == [n for n, _ in layer.named_parameters()]
