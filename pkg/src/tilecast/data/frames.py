"""Frame sources: per-second RGB frames for each video.

On-disk layout (the adapter target for external dataset conversions):

    <root>/<video_id>/<t_sec>.png      # frame_w x frame_h RGB

Frames are pre-extracted images at 1 Hz; video decoding is out of scope.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class FrameLookupError(KeyError):
    pass


class ArrayFrameSource:
    """In-memory frame source: {video_id: {t_sec: (H, W, 3) uint8}}."""

    def __init__(self, frames: dict[str, dict[int, np.ndarray]]):
        self._frames = frames
        any_frame = next(iter(next(iter(frames.values())).values()))
        self.frame_h, self.frame_w = any_frame.shape[:2]

    def video_ids(self):
        return sorted(self._frames)

    def seconds(self, video_id: str):
        return sorted(self._frames.get(video_id, ()))

    def has_frame(self, video_id: str, t_sec: int) -> bool:
        return t_sec in self._frames.get(video_id, ())

    def get_frame(self, video_id: str, t_sec: int) -> np.ndarray:
        try:
            return self._frames[video_id][t_sec]
        except KeyError:
            raise FrameLookupError(f"no frame for video {video_id!r} at t={t_sec}") from None


class DirectoryFrameSource:
    """Frame source over a <root>/<video_id>/<t_sec>.png directory tree."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"frame root {self.root} does not exist")
        self._index: dict[str, set[int]] = {}
        for vid_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            secs = {int(p.stem) for p in vid_dir.glob("*.png") if p.stem.isdigit()}
            if secs:
                self._index[vid_dir.name] = secs
        probe = self.get_frame(*self._first_key())
        self.frame_h, self.frame_w = probe.shape[:2]

    def _first_key(self):
        for vid, secs in self._index.items():
            return vid, min(secs)
        raise FileNotFoundError(f"no frames found under {self.root}")

    def video_ids(self):
        return sorted(self._index)

    def seconds(self, video_id: str):
        return sorted(self._index.get(video_id, ()))

    def has_frame(self, video_id: str, t_sec: int) -> bool:
        return t_sec in self._index.get(video_id, set())

    def get_frame(self, video_id: str, t_sec: int) -> np.ndarray:
        path = self.root / video_id / f"{t_sec}.png"
        if not path.exists():
            raise FrameLookupError(f"no frame for video {video_id!r} at t={t_sec}")
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))


def write_frames(source, out_root: str | Path) -> int:
    """Write every frame of a source to <out_root>/<video_id>/<t_sec>.png; returns count."""
    out_root = Path(out_root)
    n = 0
    for vid in source.video_ids():
        vdir = out_root / vid
        vdir.mkdir(parents=True, exist_ok=True)
        for sec in source.seconds(vid):
            Image.fromarray(source.get_frame(vid, sec)).save(vdir / f"{sec}.png")
            n += 1
    return n
