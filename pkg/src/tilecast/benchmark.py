"""numba-vs-numpy kernel benchmark (the two backends behind the env flag)."""

from __future__ import annotations

import time

import numpy as np

from . import kernels


def _cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(240, 512))
    gain = np.ones(512)
    bias = np.zeros(512)
    dy = rng.normal(size=(240, 512))
    y, mean, rstd = kernels.layernorm_fwd(x, gain, bias, 1e-5)
    att = rng.normal(size=(1920, 15))
    att_y = kernels.softmax_fwd(att)
    gates = rng.normal(size=(16, 4 * 256))
    c_prev = rng.normal(size=(16, 256))
    h, c, i, f, g, o, tc = kernels.lstm_cell_fwd(gates, c_prev)
    p = rng.normal(size=1_000_000)
    grad = rng.normal(size=1_000_000)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    gray = rng.random((360, 720))
    mask = (rng.random((10, 20)) < 0.4).astype(np.float64)
    return [
        ("layernorm_fwd", lambda: kernels.layernorm_fwd(x, gain, bias, 1e-5), 50),
        ("layernorm_bwd", lambda: kernels.layernorm_bwd(dy, x, gain, mean, rstd), 50),
        ("softmax_fwd", lambda: kernels.softmax_fwd(att), 100),
        ("softmax_bwd", lambda: kernels.softmax_bwd(att_y, att_y), 100),
        ("lstm_cell_fwd", lambda: kernels.lstm_cell_fwd(gates, c_prev), 200),
        (
            "lstm_cell_bwd",
            lambda: kernels.lstm_cell_bwd(h, c, c_prev, i, f, g, o, tc),
            200,
        ),
        (
            "adamw_update",
            lambda: kernels.adamw_update(
                p, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001
            ),
            20,
        ),
        ("render_gaussian", lambda: kernels.render_gaussian(360, 720, 100.0, 200.0, 26.0), 20),
        ("box_pool", lambda: kernels.box_pool(gray, 24, 48), 50),
        ("viewport_sums", lambda: kernels.viewport_sums(mask, 4, 9), 500),
    ]


def _time(fn, reps: int) -> float:
    fn()  # warm cache / JIT
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps * 1e3


def bench_kernels(repeat_scale: float = 1.0) -> list[dict]:
    """Time every kernel under both backends; returns one row per kernel."""
    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    timings: dict[str, dict[str, float]] = {}
    previous = kernels.active_backend()
    try:
        for backend in backends:
            kernels.set_backend(backend)
            for name, fn, reps in _cases():
                reps = max(1, int(reps * repeat_scale))
                timings.setdefault(name, {})[backend] = _time(fn, reps)
    finally:
        kernels.set_backend(previous)
    rows = []
    for name, per_backend in timings.items():
        row = {"kernel": name, **{f"{b}_ms": per_backend[b] for b in per_backend}}
        if "numba" in per_backend and "numpy" in per_backend:
            row["speedup"] = per_backend["numpy"] / per_backend["numba"]
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [f"{'kernel':<18} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"]
    for row in rows:
        numba_ms = row.get("numba_ms")
        lines.append(
            f"{row['kernel']:<18} {row['numpy_ms']:>10.4f} "
            + (f"{numba_ms:>10.4f} {row['speedup']:>8.2f}" if numba_ms is not None else f"{'-':>10} {'-':>8}")
        )
    return "\n".join(lines)
