"""Synthetic desk-scale dataset generator.

Head trajectories follow a mean-reverting (Ornstein-Uhlenbeck) random walk
on yaw and pitch. Each frame shows a bright Gaussian blob on a dark
background centered at the head's frame position one second in the future,
so the visual stream genuinely predicts motion. Gaze is the current head
frame position normalized to [0, 1] plus clamped noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..geometry import GazePosition, HeadPosition, TileGrid, head_to_frame
from .frames import ArrayFrameSource
from .traces import TraceRecord


@dataclass(frozen=True)
class SynthConfig:
    n_streams: int = 2
    seconds_per_stream: int = 60
    seed: int = 0
    # per-second OU updates: x += theta * (mu - x) + sigma * noise
    ou_theta_yaw: float = 0.15
    ou_sigma_yaw: float = 0.45
    ou_theta_pitch: float = 0.3
    ou_sigma_pitch: float = 0.18
    blob_sigma_px: float = 26.0
    blob_peak: float = 1.0
    gaze_noise: float = 0.01

    def __post_init__(self):
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")
        if self.seconds_per_stream < 1:
            raise ValueError("seconds_per_stream must be >= 1")


def _ou_walk(rng, n, theta, sigma, lo, hi, wrap: bool):
    x = np.empty(n)
    x[0] = rng.uniform(lo * 0.5, hi * 0.5)
    for k in range(1, n):
        step = theta * (0.0 - x[k - 1]) + sigma * rng.standard_normal()
        v = x[k - 1] + step
        if wrap:
            v = (v + hi) % (hi - lo) + lo  # wrap across +-pi
        x[k] = min(max(v, lo), hi)
    return x


def synth_dataset(
    n_streams: int = 2,
    seconds_per_stream: int = 60,
    seed: int = 0,
    grid: TileGrid | None = None,
    cfg: SynthConfig | None = None,
):
    """Generate (records, ArrayFrameSource); byte-identical for a given seed."""
    grid = grid or TileGrid()
    cfg = cfg or SynthConfig(n_streams=n_streams, seconds_per_stream=seconds_per_stream, seed=seed)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    records: list[TraceRecord] = []
    frames: dict[str, dict[int, np.ndarray]] = {}
    for si in range(cfg.n_streams):
        video_id = f"synth{si:03d}"
        user_id = f"user{si:03d}"
        n = cfg.seconds_per_stream + 1  # one extra so the last frame can look ahead
        yaw = _ou_walk(rng, n, cfg.ou_theta_yaw, cfg.ou_sigma_yaw, -math.pi, math.pi, wrap=True)
        pitch = _ou_walk(
            rng, n, cfg.ou_theta_pitch, cfg.ou_sigma_pitch, -math.pi / 2, math.pi / 2, wrap=False
        )
        vid_frames: dict[int, np.ndarray] = {}
        for s in range(cfg.seconds_per_stream):
            head_now = HeadPosition(float(yaw[s]), float(pitch[s]))
            u, v = head_to_frame(head_now, grid)
            gx = min(max(u / grid.frame_w + cfg.gaze_noise * rng.standard_normal(), 0.0), 1.0)
            gy = min(max(v / grid.frame_h + cfg.gaze_noise * rng.standard_normal(), 0.0), 1.0)
            records.append(
                TraceRecord(video_id, user_id, s, head_now, GazePosition(gx, gy))
            )
            head_next = HeadPosition(float(yaw[s + 1]), float(pitch[s + 1]))
            nu, nv = head_to_frame(head_next, grid)
            blob = kernels.render_gaussian(
                grid.frame_h, grid.frame_w, nu, nv, cfg.blob_sigma_px, cfg.blob_peak
            )
            img = np.clip(np.rint(blob * 255.0), 0, 255).astype(np.uint8)
            vid_frames[s] = np.repeat(img[:, :, None], 3, axis=2)
        frames[video_id] = vid_frames
    return records, ArrayFrameSource(frames)
