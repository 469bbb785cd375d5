"""Trace ingestion: JSON-lines head/gaze records at 1 Hz.

Schema, one object per line:

    {"video_id": str, "user_id": str, "t_sec": int,
     "yaw": float, "pitch": float, "gx": float, "gy": float}

yaw/pitch are radians in [-pi, pi] / [-pi/2, pi/2]; gx/gy are the gaze point
normalized by frame width/height. (video_id, user_id, t_sec) must be unique.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..geometry import GazePosition, HeadPosition


class TraceFormatError(ValueError):
    """Raised for malformed trace files; message carries the line number."""


_FIELDS = ("video_id", "user_id", "t_sec", "yaw", "pitch", "gx", "gy")


@dataclass(frozen=True)
class TraceRecord:
    video_id: str
    user_id: str
    t_sec: int
    head: HeadPosition
    gaze: GazePosition

    def to_json_obj(self) -> dict:
        return {
            "video_id": self.video_id,
            "user_id": self.user_id,
            "t_sec": self.t_sec,
            "yaw": self.head.yaw,
            "pitch": self.head.pitch,
            "gx": self.gaze.x,
            "gy": self.gaze.y,
        }


def _parse_line(obj: dict, line_no: int) -> TraceRecord:
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise TraceFormatError(f"line {line_no}: missing field(s) {', '.join(missing)}")
    unknown = [k for k in obj if k not in _FIELDS]
    if unknown:
        raise TraceFormatError(f"line {line_no}: unknown field(s) {', '.join(unknown)}")
    if not isinstance(obj["t_sec"], int):
        raise TraceFormatError(f"line {line_no}: t_sec must be an integer")
    try:
        head = HeadPosition(float(obj["yaw"]), float(obj["pitch"]))
    except ValueError as exc:
        raise TraceFormatError(f"line {line_no}: {exc}") from None
    try:
        gaze = GazePosition(float(obj["gx"]), float(obj["gy"]))
    except ValueError as exc:
        raise TraceFormatError(f"line {line_no}: gaze {exc}") from None
    return TraceRecord(str(obj["video_id"]), str(obj["user_id"]), obj["t_sec"], head, gaze)


def load_traces(path: str | Path) -> list[TraceRecord]:
    """Read and validate a JSONL trace file; rejects malformed lines with line numbers."""
    records: list[TraceRecord] = []
    seen: set[tuple[str, str, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise TraceFormatError(f"line {line_no}: expected a JSON object")
            rec = _parse_line(obj, line_no)
            key = (rec.video_id, rec.user_id, rec.t_sec)
            if key in seen:
                raise TraceFormatError(f"line {line_no}: duplicate record key {key}")
            seen.add(key)
            records.append(rec)
    return records


def save_traces(records, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_obj(), sort_keys=True) + "\n")
