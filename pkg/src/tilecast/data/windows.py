"""Sliding-window sample generation and dataset splitting.

A sample at start second s (history length t, horizon T) uses:

* trace records for seconds [s, s+t) as history and [s+t, s+t+T) as future
  supervision (both must exist),
* frames for seconds [s, s+t+T) (a missing frame skips the sample),
* ground-truth anchors = nearest_viewport of the future heads.

Adjacent samples of a stream start exactly one second apart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import TileGrid, nearest_viewport_batch
from .traces import TraceRecord

log = logging.getLogger(__name__)


class DescriptorCache:
    """On-disk per-video descriptor store keyed by extractor identity.

    Files live next to the frames: <root>/<video_id>/.desc_<identity>.npz.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, video_id: str, identity: str) -> Path:
        return self.root / video_id / f".desc_{identity}.npz"

    def load(self, video_id: str, identity: str) -> dict[int, np.ndarray]:
        path = self._path(video_id, identity)
        if not path.exists():
            return {}
        with np.load(path) as blob:
            return {int(k): blob[k] for k in blob.files}

    def save(self, video_id: str, identity: str, feats: dict[int, np.ndarray]) -> None:
        path = self._path(video_id, identity)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, **{str(k): v for k, v in feats.items()})


@dataclass
class TraceSample:
    head_hist: np.ndarray  # (t, 2) yaw/pitch radians
    eye_hist: np.ndarray  # (t, 2) normalized gaze
    frames: np.ndarray  # (t+T, dim) descriptors or (t+T, H, W, 3) uint8 images
    gt_anchors: np.ndarray  # (T, 2) int rows/cols
    gt_heads: np.ndarray  # (T, 2) yaw/pitch radians
    meta: tuple[str, str, int]  # (video_id, user_id, start_sec)

    @property
    def history_len(self) -> int:
        return self.head_hist.shape[0]

    @property
    def horizon(self) -> int:
        return self.gt_heads.shape[0]


@dataclass
class WindowCounters:
    streams: int = 0
    candidate_offsets: int = 0
    emitted: int = 0
    skipped_missing_frame: int = 0


@dataclass(frozen=True)
class SplitSpec:
    """Random split fractions; by_stream splits whole (video, user) streams instead."""

    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0
    by_stream: bool = False

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs) or all(f == 0 for f in fracs):
            raise ValueError("split fractions must be non-negative and not all zero")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


def _group_streams(records: Sequence[TraceRecord]):
    streams: dict[tuple[str, str], dict[int, TraceRecord]] = {}
    for rec in records:
        streams.setdefault((rec.video_id, rec.user_id), {})[rec.t_sec] = rec
    return {k: streams[k] for k in sorted(streams)}


def build_windows(
    records: Sequence[TraceRecord],
    frames,
    t: int,
    horizon: int,
    grid: TileGrid | None = None,
    extractor=None,
    counters: WindowCounters | None = None,
    cache: DescriptorCache | None = None,
) -> list[TraceSample]:
    """Generate one TraceSample per valid start offset, in canonical stream order.

    With an extractor, sample.frames holds (t+T, dim) descriptors (each frame
    extracted once per stream even though windows overlap); otherwise stacked
    raw images. A DescriptorCache persists descriptors across runs, keyed by
    the extractor identity.
    """
    if horizon > t:
        raise ValueError(f"horizon {horizon} must be <= history length {t}")
    grid = grid or TileGrid()
    counters = counters if counters is not None else WindowCounters()
    span = t + horizon
    samples: list[TraceSample] = []
    for (video_id, user_id), by_sec in _group_streams(records).items():
        counters.streams += 1
        secs = sorted(by_sec)
        lo, hi = secs[0], secs[-1]
        # in-memory per-stream reuse: overlapping windows share frames
        feat_cache: dict[int, np.ndarray] = {}
        cached_n = 0
        if extractor is not None and cache is not None:
            feat_cache = cache.load(video_id, extractor.identity)
            cached_n = len(feat_cache)
        for start in range(lo, hi - span + 2):
            needed = range(start, start + span)
            if not all(s in by_sec for s in needed):
                continue
            counters.candidate_offsets += 1
            if not all(frames.has_frame(video_id, s) for s in needed):
                counters.skipped_missing_frame += 1
                continue
            hist = [by_sec[s] for s in range(start, start + t)]
            future = [by_sec[s] for s in range(start + t, start + span)]
            head_hist = np.array([(r.head.yaw, r.head.pitch) for r in hist])
            eye_hist = np.array([(r.gaze.x, r.gaze.y) for r in hist])
            gt_heads = np.array([(r.head.yaw, r.head.pitch) for r in future])
            rows, cols = nearest_viewport_batch(gt_heads[:, 0], gt_heads[:, 1], grid)
            gt_anchors = np.stack([rows, cols], axis=1)
            if extractor is not None:
                for s in needed:
                    if s not in feat_cache:
                        img = frames.get_frame(video_id, s)
                        feat_cache[s] = extractor.extract(img[None])[0]
                frame_data = np.stack([feat_cache[s] for s in needed])
            else:
                frame_data = np.stack([frames.get_frame(video_id, s) for s in needed])
            samples.append(
                TraceSample(
                    head_hist=head_hist,
                    eye_hist=eye_hist,
                    frames=frame_data,
                    gt_anchors=gt_anchors,
                    gt_heads=gt_heads,
                    meta=(video_id, user_id, start),
                )
            )
            counters.emitted += 1
        if extractor is not None and cache is not None and len(feat_cache) > cached_n:
            cache.save(video_id, extractor.identity, feat_cache)
    if counters.skipped_missing_frame:
        log.info("build_windows skipped %d window(s) with missing frames", counters.skipped_missing_frame)
    return samples


def collate_samples(samples: Sequence[TraceSample], dtype=np.float32):
    """Stack samples into batch arrays (head, eye, frames, gt_heads, gt_anchors)."""
    head = np.stack([s.head_hist for s in samples]).astype(dtype)
    eye = np.stack([s.eye_hist for s in samples]).astype(dtype)
    frames = np.stack([s.frames for s in samples])
    if frames.dtype != np.uint8:
        frames = frames.astype(dtype)
    gt_heads = np.stack([s.gt_heads for s in samples]).astype(dtype)
    gt_anchors = np.stack([s.gt_anchors for s in samples])
    return head, eye, frames, gt_heads, gt_anchors


def _largest_remainder_sizes(n: int, fracs: Sequence[float]) -> list[int]:
    # floor each share, then hand remaining items to the largest fractional
    # remainders; ties go to the earlier part (train, val, test order)
    raw = [n * f for f in fracs]
    sizes = [int(np.floor(r)) for r in raw]
    remainders = [r - s for r, s in zip(raw, sizes)]
    for _ in range(n - sum(sizes)):
        k = int(np.argmax(remainders))
        sizes[k] += 1
        remainders[k] = -1.0
    return sizes


def split_dataset(samples: Sequence[TraceSample], spec: SplitSpec):
    """Disjoint, exhaustive (train, val, test) partition; deterministic per seed."""
    ordered = sorted(samples, key=lambda s: s.meta)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    if spec.by_stream:
        keys = sorted({s.meta[:2] for s in ordered})
        perm = rng.permutation(len(keys))
        sizes = _largest_remainder_sizes(len(keys), fracs)
        assign: dict[tuple[str, str], int] = {}
        cut1, cut2 = sizes[0], sizes[0] + sizes[1]
        for pos, ki in enumerate(perm):
            assign[keys[ki]] = 0 if pos < cut1 else (1 if pos < cut2 else 2)
        parts: tuple[list, list, list] = ([], [], [])
        for s in ordered:
            parts[assign[s.meta[:2]]].append(s)
        return parts
    perm = rng.permutation(len(ordered))
    sizes = _largest_remainder_sizes(len(ordered), fracs)
    cut1, cut2 = sizes[0], sizes[0] + sizes[1]
    train = [ordered[i] for i in perm[:cut1]]
    val = [ordered[i] for i in perm[cut1:cut2]]
    test = [ordered[i] for i in perm[cut2:]]
    return train, val, test
