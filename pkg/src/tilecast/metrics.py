"""Evaluation metrics and the inference latency benchmark.

AP (average prediction accuracy): fraction of steps whose predicted anchor
exactly equals the ground truth. AO (average overlap ratio): mean fraction
of viewport tiles shared by prediction and ground truth (equal-size
viewports make the ratio symmetric).

Reports break both metrics down by horizon prefix: the horizon-k column
averages the first k predicted steps of one model trained at full horizon.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .data.windows import collate_samples
from .geometry import TileGrid, ViewportAnchor, overlap_count_batch


def _anchor_array(anchors) -> np.ndarray:
    if isinstance(anchors, np.ndarray):
        arr = anchors
    else:
        arr = np.array(
            [(a.row, a.col) if isinstance(a, ViewportAnchor) else tuple(a) for a in anchors]
        )
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (T, 2) anchors, got shape {arr.shape}")
    return arr


def ap(preds, gts) -> float:
    """Fraction of steps with exact anchor equality."""
    p = _anchor_array(preds)
    g = _anchor_array(gts)
    if p.shape != g.shape:
        raise ValueError(f"prediction length {p.shape[0]} != ground truth {g.shape[0]}")
    return float(np.all(p == g, axis=1).mean())


def ao(preds, gts, grid: TileGrid) -> float:
    """Mean overlap fraction between predicted and ground-truth viewports."""
    p = _anchor_array(preds)
    g = _anchor_array(gts)
    if p.shape != g.shape:
        raise ValueError(f"prediction length {p.shape[0]} != ground truth {g.shape[0]}")
    overlap = overlap_count_batch(g[:, 0], g[:, 1], p[:, 0], p[:, 1], grid)
    return float(overlap.mean() / grid.tiles_per_viewport)


@dataclass
class EvalReport:
    per_horizon: list[dict]  # [{"horizon": k, "ap": ..., "ao": ...} for k in 1..T]
    overall: dict  # metrics over the full horizon
    n_samples: int
    stability: dict | None = None  # inferred drop fractions from 1 s to T s
    delay_ms: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "per_horizon": self.per_horizon,
            "overall": self.overall,
            "n_samples": self.n_samples,
            "stability": self.stability,
            "delay_ms": self.delay_ms,
        }

    def to_csv_rows(self) -> list[dict]:
        rows = [
            {"horizon": row["horizon"], "ap": row["ap"], "ao": row["ao"]}
            for row in self.per_horizon
        ]
        rows.append({"horizon": "overall", "ap": self.overall["ap"], "ao": self.overall["ao"]})
        return rows

    def write(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=["horizon", "ap", "ao"])
                writer.writeheader()
                writer.writerows(self.to_csv_rows())


def match_and_overlap_matrices(model, samples, batch_size: int = 64):
    """Per-sample, per-step exact-match (N, T) and overlap-fraction (N, T) arrays."""
    grid = model.grid
    matches = []
    overlaps = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        head, eye, frames, _, gt_anchors = collate_samples(chunk, dtype=model.dtype)
        result = model.forward(head, eye, frames)
        pred = result.anchors  # (B, T, 2)
        matches.append(np.all(pred == gt_anchors, axis=2))
        ov = overlap_count_batch(
            gt_anchors[..., 0].ravel(),
            gt_anchors[..., 1].ravel(),
            pred[..., 0].ravel(),
            pred[..., 1].ravel(),
            grid,
        ).reshape(pred.shape[:2])
        overlaps.append(ov / grid.tiles_per_viewport)
    return np.concatenate(matches), np.concatenate(overlaps)


def evaluate(model, samples, batch_size: int = 64) -> EvalReport:
    """AP/AO per horizon prefix 1..T and overall; deterministic for a frozen model."""
    if not samples:
        raise ValueError("cannot evaluate on an empty dataset")
    matches, overlaps = match_and_overlap_matrices(model, samples, batch_size)
    horizon = matches.shape[1]
    per_horizon = [
        {
            "horizon": k,
            "ap": float(matches[:, :k].mean()),
            "ao": float(overlaps[:, :k].mean()),
        }
        for k in range(1, horizon + 1)
    ]
    overall = {"ap": per_horizon[-1]["ap"], "ao": per_horizon[-1]["ao"]}
    ap1, apt = per_horizon[0]["ap"], per_horizon[-1]["ap"]
    ao1, aot = per_horizon[0]["ao"], per_horizon[-1]["ao"]
    stability = {
        # inferred reading of the prose stability metric: fractional drop from
        # the 1 s column to the T s column
        "ap_drop_frac": None if ap1 == 0 else (ap1 - apt) / ap1,
        "ao_drop_frac": None if ao1 == 0 else (ao1 - aot) / ao1,
    }
    return EvalReport(per_horizon, overall, n_samples=matches.shape[0], stability=stability)


# --- latency -----------------------------------------------------------------


def median_ms(trials) -> float:
    return float(np.median(np.asarray(trials, dtype=np.float64)))


@dataclass
class DelayReport:
    median_ms: float
    trials_ms: list[float]
    batch_size: int
    horizon: int
    n_warmup: int
    hardware: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "median_ms": self.median_ms,
            "trials_ms": self.trials_ms,
            "batch_size": self.batch_size,
            "horizon": self.horizon,
            "n_warmup": self.n_warmup,
            "hardware": self.hardware,
        }


def hardware_descriptor() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": kernels.active_backend(),
    }


def bench_delay(
    model,
    batch_size: int = 16,
    n_warmup: int = 3,
    n_trials: int = 10,
    seed: int = 0,
) -> DelayReport:
    """Median wall-clock of one batched forward pass (no gradients).

    Run it alone on an otherwise idle machine; numbers are hardware-bound.
    """
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    t, horizon = cfg.history_len, cfg.horizon
    head = rng.uniform(-1, 1, size=(batch_size, t, 2)).astype(model.dtype)
    eye = rng.uniform(0, 1, size=(batch_size, t, 2)).astype(model.dtype)
    desc = rng.normal(size=(batch_size, t + horizon, cfg.descriptor_dim)).astype(model.dtype)
    for _ in range(n_warmup):
        model.forward(head, eye, desc)
    trials = []
    for _ in range(n_trials):
        start = time.perf_counter()
        model.forward(head, eye, desc)
        trials.append((time.perf_counter() - start) * 1e3)
    return DelayReport(
        median_ms=median_ms(trials),
        trials_ms=[float(x) for x in trials],
        batch_size=batch_size,
        horizon=horizon,
        n_warmup=n_warmup,
        hardware=hardware_descriptor(),
    )
