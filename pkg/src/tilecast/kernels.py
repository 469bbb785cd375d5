"""Hot numeric kernels with paired numba and pure-numpy implementations.

Matrix products stay on numpy/BLAS everywhere; the kernels here are the
fusion-heavy elementwise/reduction loops where numba wins: layer norm,
softmax, the LSTM cell nonlinearity, the AdamW update, synthetic frame
rendering, box pooling and the viewport window scan.

Backend selection:
  * env var ``TILECAST_KERNELS`` = ``auto`` (default) | ``numba`` | ``numpy``
  * :func:`set_backend` switches at runtime (used by tests and the
    ``bench-kernels`` command).

Both implementations of every kernel compute the same quantities in the
same summation order, so results agree to rounding either way.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay runnable
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):  # type: ignore[misc]
        def deco(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return deco


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _np_layernorm_fwd(x, gain, bias, eps):
    mean = x.mean(axis=-1)
    var = x.var(axis=-1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[..., None]) * rstd[..., None] * gain + bias
    return y, mean, rstd


def _np_layernorm_bwd(dy, x, gain, mean, rstd):
    xhat = (x - mean[..., None]) * rstd[..., None]
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = rstd[..., None] * (dxhat - m1 - xhat * m2)
    dgain = (dy * xhat).reshape(-1, x.shape[-1]).sum(axis=0)
    dbias = dy.reshape(-1, x.shape[-1]).sum(axis=0)
    return dx, dgain, dbias


def _np_softmax_fwd(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _np_softmax_bwd(dy, y):
    inner = (dy * y).sum(axis=-1, keepdims=True)
    return y * (dy - inner)


def _np_lstm_cell_fwd(gates, c_prev):
    # gate order i, f, g, o along the last axis
    h_dim = c_prev.shape[-1]
    i = 1.0 / (1.0 + np.exp(-gates[:, 0 * h_dim : 1 * h_dim]))
    f = 1.0 / (1.0 + np.exp(-gates[:, 1 * h_dim : 2 * h_dim]))
    g = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
    o = 1.0 / (1.0 + np.exp(-gates[:, 3 * h_dim : 4 * h_dim]))
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, i, f, g, o, tc


def _np_lstm_cell_bwd(dh, dc_in, c_prev, i, f, g, o, tc):
    dc = dh * o * (1.0 - tc * tc) + dc_in
    di = dc * g * i * (1.0 - i)
    df = dc * c_prev * f * (1.0 - f)
    dg = dc * i * (1.0 - g * g)
    do = dh * tc * o * (1.0 - o)
    dgates = np.concatenate([di, df, dg, do], axis=-1)
    dc_prev = dc * f
    return dgates, dc_prev


def _np_adamw_update(p, grad, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / bc1
    vhat = v / bc2
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)


def _np_render_gaussian(height, width, cu, cv, sigma, peak):
    ys = np.arange(height, dtype=np.float64) + 0.5
    xs = np.arange(width, dtype=np.float64) + 0.5
    dx = np.abs(xs - cu)
    dx = np.minimum(dx, width - dx)  # longitude wraps
    dy = ys - cv
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    return (peak * np.exp(-d2 / (2.0 * sigma * sigma))).astype(np.float32)


def _np_box_pool(gray, out_h, out_w):
    h, w = gray.shape
    row_bin = (np.arange(h) * out_h) // h
    col_bin = (np.arange(w) * out_w) // w
    out = np.zeros((out_h, out_w), dtype=np.float64)
    cnt = np.zeros((out_h, out_w), dtype=np.float64)
    np.add.at(out, (row_bin[:, None], col_bin[None, :]), gray)
    np.add.at(cnt, (row_bin[:, None], col_bin[None, :]), 1.0)
    return (out / cnt).astype(np.float32)


def _np_viewport_sums(mask, vp_rows, vp_cols):
    n_rows, n_cols = mask.shape
    wrapped = np.concatenate([mask, mask[:, : vp_cols - 1]], axis=1).astype(np.float64)
    # column-window sums via cumsum, then row-window sums
    cs = np.cumsum(wrapped, axis=1)
    cs = np.concatenate([np.zeros((n_rows, 1)), cs], axis=1)
    col_sums = cs[:, vp_cols:] - cs[:, :-vp_cols]  # (n_rows, n_cols)
    rs = np.cumsum(col_sums, axis=0)
    rs = np.concatenate([np.zeros((1, n_cols)), rs], axis=0)
    out = rs[vp_rows:, :] - rs[:-vp_rows, :]  # (n_rows - vp_rows + 1, n_cols)
    return out


# ---------------------------------------------------------------------------
# numba implementations (loop style, identical math)
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_layernorm_fwd(x, gain, bias, eps):
        n, d = x.shape
        y = np.empty_like(x)
        mean = np.empty(n, dtype=x.dtype)
        rstd = np.empty(n, dtype=x.dtype)
        for r in range(n):
            s = 0.0
            for c in range(d):
                s += x[r, c]
            mu = s / d
            sq = 0.0
            for c in range(d):
                dv = x[r, c] - mu
                sq += dv * dv
            rs = 1.0 / np.sqrt(sq / d + eps)
            mean[r] = mu
            rstd[r] = rs
            for c in range(d):
                y[r, c] = (x[r, c] - mu) * rs * gain[c] + bias[c]
        return y, mean, rstd

    @njit(cache=True)
    def _nb_layernorm_bwd(dy, x, gain, mean, rstd):
        n, d = x.shape
        dx = np.empty_like(x)
        dgain = np.zeros(d, dtype=x.dtype)
        dbias = np.zeros(d, dtype=x.dtype)
        for r in range(n):
            mu = mean[r]
            rs = rstd[r]
            m1 = 0.0
            m2 = 0.0
            for c in range(d):
                xh = (x[r, c] - mu) * rs
                dxh = dy[r, c] * gain[c]
                m1 += dxh
                m2 += dxh * xh
                dgain[c] += dy[r, c] * xh
                dbias[c] += dy[r, c]
            m1 /= d
            m2 /= d
            for c in range(d):
                xh = (x[r, c] - mu) * rs
                dx[r, c] = rs * (dy[r, c] * gain[c] - m1 - xh * m2)
        return dx, dgain, dbias

    @njit(cache=True)
    def _nb_softmax_fwd(x):
        n, d = x.shape
        y = np.empty_like(x)
        for r in range(n):
            mx = x[r, 0]
            for c in range(1, d):
                if x[r, c] > mx:
                    mx = x[r, c]
            s = 0.0
            for c in range(d):
                e = np.exp(x[r, c] - mx)
                y[r, c] = e
                s += e
            for c in range(d):
                y[r, c] /= s
        return y

    @njit(cache=True)
    def _nb_softmax_bwd(dy, y):
        n, d = y.shape
        dx = np.empty_like(y)
        for r in range(n):
            inner = 0.0
            for c in range(d):
                inner += dy[r, c] * y[r, c]
            for c in range(d):
                dx[r, c] = y[r, c] * (dy[r, c] - inner)
        return dx

    @njit(cache=True)
    def _nb_lstm_cell_fwd(gates, c_prev):
        n, h_dim = c_prev.shape
        h = np.empty_like(c_prev)
        c = np.empty_like(c_prev)
        i = np.empty_like(c_prev)
        f = np.empty_like(c_prev)
        g = np.empty_like(c_prev)
        o = np.empty_like(c_prev)
        tc = np.empty_like(c_prev)
        for r in range(n):
            for k in range(h_dim):
                iv = 1.0 / (1.0 + np.exp(-gates[r, k]))
                fv = 1.0 / (1.0 + np.exp(-gates[r, h_dim + k]))
                gv = np.tanh(gates[r, 2 * h_dim + k])
                ov = 1.0 / (1.0 + np.exp(-gates[r, 3 * h_dim + k]))
                cv = fv * c_prev[r, k] + iv * gv
                tv = np.tanh(cv)
                i[r, k] = iv
                f[r, k] = fv
                g[r, k] = gv
                o[r, k] = ov
                c[r, k] = cv
                tc[r, k] = tv
                h[r, k] = ov * tv
        return h, c, i, f, g, o, tc

    @njit(cache=True)
    def _nb_lstm_cell_bwd(dh, dc_in, c_prev, i, f, g, o, tc):
        n, h_dim = c_prev.shape
        dgates = np.empty((n, 4 * h_dim), dtype=c_prev.dtype)
        dc_prev = np.empty_like(c_prev)
        for r in range(n):
            for k in range(h_dim):
                dc = dh[r, k] * o[r, k] * (1.0 - tc[r, k] * tc[r, k]) + dc_in[r, k]
                dgates[r, k] = dc * g[r, k] * i[r, k] * (1.0 - i[r, k])
                dgates[r, h_dim + k] = dc * c_prev[r, k] * f[r, k] * (1.0 - f[r, k])
                dgates[r, 2 * h_dim + k] = dc * i[r, k] * (1.0 - g[r, k] * g[r, k])
                dgates[r, 3 * h_dim + k] = dh[r, k] * tc[r, k] * o[r, k] * (1.0 - o[r, k])
                dc_prev[r, k] = dc * f[r, k]
        return dgates, dc_prev

    @njit(cache=True, parallel=True)
    def _nb_adamw_update(p, grad, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
        # elementwise with no cross-iteration state: parallel yet deterministic
        n = p.size
        pf = p.reshape(n)
        gf = grad.reshape(n)
        mf = m.reshape(n)
        vf = v.reshape(n)
        for k in prange(n):
            mf[k] = beta1 * mf[k] + (1.0 - beta1) * gf[k]
            vf[k] = beta2 * vf[k] + (1.0 - beta2) * gf[k] * gf[k]
            mhat = mf[k] / bc1
            vhat = vf[k] / bc2
            pf[k] -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * pf[k])

    @njit(cache=True)
    def _nb_render_gaussian(height, width, cu, cv, sigma, peak):
        out = np.empty((height, width), dtype=np.float32)
        inv = 1.0 / (2.0 * sigma * sigma)
        for y in range(height):
            dy = (y + 0.5) - cv
            dy2 = dy * dy
            for x in range(width):
                dx = abs((x + 0.5) - cu)
                if width - dx < dx:
                    dx = width - dx
                out[y, x] = peak * np.exp(-(dy2 + dx * dx) * inv)
        return out

    @njit(cache=True)
    def _nb_box_pool(gray, out_h, out_w):
        h, w = gray.shape
        out = np.zeros((out_h, out_w), dtype=np.float64)
        cnt = np.zeros((out_h, out_w), dtype=np.float64)
        for y in range(h):
            by = (y * out_h) // h
            for x in range(w):
                bx = (x * out_w) // w
                out[by, bx] += gray[y, x]
                cnt[by, bx] += 1.0
        return (out / cnt).astype(np.float32)

    @njit(cache=True)
    def _nb_viewport_sums(mask, vp_rows, vp_cols):
        n_rows, n_cols = mask.shape
        out = np.zeros((n_rows - vp_rows + 1, n_cols), dtype=np.float64)
        for r in range(n_rows - vp_rows + 1):
            for c in range(n_cols):
                s = 0.0
                for dr in range(vp_rows):
                    for dc in range(vp_cols):
                        s += mask[r + dr, (c + dc) % n_cols]
                out[r, c] = s
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_KERNEL_NAMES = (
    "layernorm_fwd",
    "layernorm_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "lstm_cell_fwd",
    "lstm_cell_bwd",
    "adamw_update",
    "render_gaussian",
    "box_pool",
    "viewport_sums",
)

IMPLS = {"numpy": {name: globals()["_np_" + name] for name in _KERNEL_NAMES}}
if HAVE_NUMBA:
    IMPLS["numba"] = {name: globals()["_nb_" + name] for name in _KERNEL_NAMES}


def _resolve(requested: str) -> str:
    if requested == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {requested!r} (use auto, numba or numpy)")
    if requested == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return requested


_BACKEND = _resolve(os.environ.get("TILECAST_KERNELS", "auto"))


def set_backend(name: str) -> str:
    """Select the kernel backend ('auto', 'numba' or 'numpy'); returns the active one."""
    global _BACKEND
    _BACKEND = _resolve(name)
    return _BACKEND


def active_backend() -> str:
    return _BACKEND


def _active(name):
    return IMPLS[_BACKEND][name]


# Public wrappers. The 2-d kernels see flattened leading axes so callers can
# pass any (..., D) array.


def layernorm_fwd(x, gain, bias, eps):
    shp = x.shape
    x2 = np.ascontiguousarray(x.reshape(-1, shp[-1]))
    y, mean, rstd = _active("layernorm_fwd")(x2, gain, bias, x.dtype.type(eps))
    return y.reshape(shp), mean.reshape(shp[:-1]), rstd.reshape(shp[:-1])


def layernorm_bwd(dy, x, gain, mean, rstd):
    shp = x.shape
    d = shp[-1]
    dx, dgain, dbias = _active("layernorm_bwd")(
        np.ascontiguousarray(dy.reshape(-1, d)),
        np.ascontiguousarray(x.reshape(-1, d)),
        gain,
        mean.reshape(-1),
        rstd.reshape(-1),
    )
    return dx.reshape(shp), dgain, dbias


def softmax_fwd(x):
    shp = x.shape
    y = _active("softmax_fwd")(np.ascontiguousarray(x.reshape(-1, shp[-1])))
    return y.reshape(shp)


def softmax_bwd(dy, y):
    shp = y.shape
    d = shp[-1]
    dx = _active("softmax_bwd")(
        np.ascontiguousarray(dy.reshape(-1, d)), np.ascontiguousarray(y.reshape(-1, d))
    )
    return dx.reshape(shp)


def lstm_cell_fwd(gates, c_prev):
    return _active("lstm_cell_fwd")(np.ascontiguousarray(gates), np.ascontiguousarray(c_prev))


def lstm_cell_bwd(dh, dc_in, c_prev, i, f, g, o, tc):
    return _active("lstm_cell_bwd")(
        np.ascontiguousarray(dh), np.ascontiguousarray(dc_in), c_prev, i, f, g, o, tc
    )


def adamw_update(p, grad, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    """In-place AdamW step with decoupled weight decay (bc1/bc2 bias corrections)."""
    _active("adamw_update")(
        p, np.ascontiguousarray(grad), m, v,
        p.dtype.type(lr), p.dtype.type(beta1), p.dtype.type(beta2),
        p.dtype.type(eps), p.dtype.type(wd), p.dtype.type(bc1), p.dtype.type(bc2),
    )


def render_gaussian(height, width, cu, cv, sigma, peak=1.0):
    """Gaussian intensity blob at (cu, cv) px with horizontal wrap; float32 in [0, peak]."""
    return _active("render_gaussian")(
        int(height), int(width), float(cu), float(cv), float(sigma), float(peak)
    )


def box_pool(gray, out_h, out_w):
    """Mean-pool a 2-d image onto an out_h x out_w grid (bins cover the image exactly)."""
    return _active("box_pool")(np.ascontiguousarray(gray, dtype=np.float64), int(out_h), int(out_w))


def viewport_sums(mask, vp_rows, vp_cols):
    """Window sums of every legal viewport anchor: rows clamp, columns wrap."""
    return _active("viewport_sums")(
        np.ascontiguousarray(mask, dtype=np.float64), int(vp_rows), int(vp_cols)
    )


def warmup() -> None:
    """Trigger numba compilation of every kernel on tiny inputs."""
    if _BACKEND != "numba":
        return
    x = np.linspace(-1.0, 1.0, 12, dtype=np.float64).reshape(3, 4)
    g = np.ones(4)
    b = np.zeros(4)
    y, mean, rstd = layernorm_fwd(x, g, b, 1e-5)
    layernorm_bwd(y, x, g, mean, rstd)
    s = softmax_fwd(x)
    softmax_bwd(s, s)
    gates = np.linspace(-1, 1, 3 * 8).reshape(3, 8)
    c0 = np.zeros((3, 2))
    h, c, i, f, gg, o, tc = lstm_cell_fwd(gates, c0)
    lstm_cell_bwd(h, c, c0, i, f, gg, o, tc)
    p = np.ones(4)
    adamw_update(p, p.copy(), np.zeros(4), np.zeros(4), 1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001)
    render_gaussian(4, 6, 3.0, 2.0, 1.5)
    box_pool(np.ones((6, 8)), 3, 4)
    viewport_sums(np.ones((4, 6)), 2, 3)
