"""Equirectangular tile-grid geometry.

Conventions (shared by ground truth and predictions, so every downstream
comparison is convention-independent):

* yaw (longitude) in [-pi, pi] maps linearly to pixel column, yaw = -pi at
  column 0; longitude wraps.
* pitch (latitude) in [-pi/2, pi/2] maps linearly to pixel row, pitch = +pi/2
  at row 0 ("up" is the top of the frame); latitude does not wrap.
* a viewport is identified by its anchor, the (row, col) of its top-left
  tile; anchor rows span 0..n_rows - vp_rows (no vertical wrap), anchor cols
  span the full ring 0..n_cols - 1.

All functions are pure; batch variants operate on numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class HeadPosition:
    """Head orientation: yaw in [-pi, pi], pitch in [-pi/2, pi/2] (radians)."""

    yaw: float
    pitch: float

    def __post_init__(self):
        if not (-math.pi <= self.yaw <= math.pi):
            raise ValueError(f"yaw {self.yaw} outside [-pi, pi]")
        if not (-math.pi / 2 <= self.pitch <= math.pi / 2):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class GazePosition:
    """Gaze point in frame-normalized coordinates, both in [0, 1]."""

    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"gaze x {self.x} outside [0, 1]")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"gaze y {self.y} outside [0, 1]")


@dataclass(frozen=True)
class ViewportAnchor:
    """Top-left tile of a viewport. Row bounds depend on the grid; see TileGrid.validate_anchor."""

    row: int
    col: int


@dataclass(frozen=True)
class TileGrid:
    """Tile layout of an equirectangular frame plus the viewport extent in tiles."""

    n_rows: int = 10
    n_cols: int = 20
    vp_rows: int = 4
    vp_cols: int = 9
    frame_w: int = 720
    frame_h: int = 360

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid must have at least one row and column")
        if not (1 <= self.vp_rows <= self.n_rows):
            raise ValueError(f"vp_rows {self.vp_rows} must be in [1, {self.n_rows}]")
        if not (1 <= self.vp_cols <= self.n_cols):
            raise ValueError(f"vp_cols {self.vp_cols} must be in [1, {self.n_cols}]")
        if self.frame_w % self.n_cols != 0:
            raise ValueError(f"frame_w {self.frame_w} not divisible by n_cols {self.n_cols}")
        if self.frame_h % self.n_rows != 0:
            raise ValueError(f"frame_h {self.frame_h} not divisible by n_rows {self.n_rows}")

    @property
    def tile_w(self) -> int:
        return self.frame_w // self.n_cols

    @property
    def tile_h(self) -> int:
        return self.frame_h // self.n_rows

    @property
    def n_anchor_rows(self) -> int:
        return self.n_rows - self.vp_rows + 1

    @property
    def tiles_per_viewport(self) -> int:
        return self.vp_rows * self.vp_cols

    def validate_anchor(self, anchor: ViewportAnchor) -> None:
        if not (0 <= anchor.row <= self.n_rows - self.vp_rows):
            raise ValueError(
                f"anchor row {anchor.row} outside [0, {self.n_rows - self.vp_rows}]"
            )
        if not (0 <= anchor.col < self.n_cols):
            raise ValueError(f"anchor col {anchor.col} outside [0, {self.n_cols})")

    def validate_mask(self, mask: np.ndarray) -> None:
        if mask.shape != (self.n_rows, self.n_cols):
            raise ValueError(f"mask shape {mask.shape} != {(self.n_rows, self.n_cols)}")
        vals = np.unique(mask)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("mask entries must be 0 or 1")


def head_to_frame(head: HeadPosition, grid: TileGrid) -> tuple[float, float]:
    """Map head orientation to frame pixel coordinates (u, v); u = frame_w wraps to 0."""
    u = (head.yaw + math.pi) / (2.0 * math.pi) * grid.frame_w
    v = (math.pi / 2.0 - head.pitch) / math.pi * grid.frame_h
    if u >= grid.frame_w:
        u = 0.0
    return u, v


def heads_to_frame(yaw: np.ndarray, pitch: np.ndarray, grid: TileGrid):
    """Vectorized head_to_frame over arrays of yaw/pitch."""
    u = (np.asarray(yaw, dtype=np.float64) + math.pi) / (2.0 * math.pi) * grid.frame_w
    v = (math.pi / 2.0 - np.asarray(pitch, dtype=np.float64)) / math.pi * grid.frame_h
    u = np.where(u >= grid.frame_w, 0.0, u)
    return u, v


def tile_of(u: float, v: float, grid: TileGrid) -> tuple[int, int]:
    """Tile (row, col) containing pixel (u, v); v = frame_h clamps into the last row."""
    if not (0.0 <= u < grid.frame_w):
        raise ValueError(f"u {u} outside [0, {grid.frame_w})")
    if not (0.0 <= v <= grid.frame_h):
        raise ValueError(f"v {v} outside [0, {grid.frame_h}]")
    row = min(int(v // grid.tile_h), grid.n_rows - 1)
    col = int(u // grid.tile_w)
    return row, col


def _anchor_center_grids(grid: TileGrid):
    rows = np.arange(grid.n_anchor_rows, dtype=np.float64)
    cols = np.arange(grid.n_cols, dtype=np.float64)
    center_r = rows + grid.vp_rows / 2.0
    center_c = cols + grid.vp_cols / 2.0
    return center_r, center_c


def nearest_viewport(head: HeadPosition, grid: TileGrid) -> ViewportAnchor:
    """Anchor whose viewport center is closest (in tile units, wrapped columns) to the head.

    Ties break lexicographically: smallest row, then smallest col.
    """
    rows, cols = nearest_viewport_batch(
        np.asarray([head.yaw]), np.asarray([head.pitch]), grid
    )
    return ViewportAnchor(int(rows[0]), int(cols[0]))


def nearest_viewport_batch(yaw: np.ndarray, pitch: np.ndarray, grid: TileGrid):
    """Vectorized nearest_viewport; returns (rows, cols) int arrays."""
    u, v = heads_to_frame(yaw, pitch, grid)
    ty = v / grid.tile_h  # tile-space row coordinate
    tx = u / grid.tile_w
    center_r, center_c = _anchor_center_grids(grid)
    if grid.vp_cols == grid.n_cols:
        # full-width viewports all cover the same tiles; col 0 is the canonical anchor
        center_c = center_c[:1]
    dr = ty[:, None] - center_r[None, :]  # (n, R)
    dc = tx[:, None] - center_c[None, :]  # (n, C)
    half = grid.n_cols / 2.0
    dc = np.mod(dc + half, grid.n_cols) - half  # shortest wrapped column distance
    d2 = dr[:, :, None] ** 2 + dc[:, None, :] ** 2  # (n, R, C)
    n_c = len(center_c)
    flat = d2.reshape(d2.shape[0], -1)
    idx = np.argmin(flat, axis=1)  # first occurrence = (row, col) lexicographic tie-break
    return idx // n_c, idx % n_c


def viewport_mask(anchor: ViewportAnchor, grid: TileGrid) -> np.ndarray:
    """0/1 tile mask covered by the anchor's viewport (columns wrap)."""
    grid.validate_anchor(anchor)
    mask = np.zeros((grid.n_rows, grid.n_cols), dtype=np.uint8)
    cols = (anchor.col + np.arange(grid.vp_cols)) % grid.n_cols
    mask[anchor.row : anchor.row + grid.vp_rows, cols] = 1
    return mask


def select_viewport(interest: np.ndarray, grid: TileGrid) -> ViewportAnchor:
    """Anchor covering the largest number of interested tiles.

    Equals the exhaustive scan over every legal anchor; ties break by
    smallest row, then smallest col.
    """
    grid.validate_mask(np.asarray(interest))
    sums = kernels.viewport_sums(np.asarray(interest), grid.vp_rows, grid.vp_cols)
    idx = int(np.argmax(sums))
    return ViewportAnchor(idx // grid.n_cols, idx % grid.n_cols)


def select_viewport_batch(interest: np.ndarray, grid: TileGrid):
    """select_viewport over a stack of masks (n, n_rows, n_cols) -> (rows, cols)."""
    interest = np.asarray(interest)
    n = interest.shape[0]
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    for k in range(n):
        sums = kernels.viewport_sums(interest[k], grid.vp_rows, grid.vp_cols)
        idx = int(np.argmax(sums))
        rows[k] = idx // grid.n_cols
        cols[k] = idx % grid.n_cols
    return rows, cols


def overlap_count(a: ViewportAnchor, b: ViewportAnchor, grid: TileGrid) -> int:
    """Number of tiles shared by the two viewports."""
    grid.validate_anchor(a)
    grid.validate_anchor(b)
    row_ov = max(0, grid.vp_rows - abs(a.row - b.row))
    delta = (a.col - b.col) % grid.n_cols
    col_ov = max(0, grid.vp_cols - delta) + max(0, grid.vp_cols - (grid.n_cols - delta))
    col_ov = min(col_ov, grid.vp_cols)
    return row_ov * col_ov


def overlap_count_batch(rows_a, cols_a, rows_b, cols_b, grid: TileGrid):
    """Vectorized overlap_count over parallel anchor arrays."""
    rows_a = np.asarray(rows_a)
    cols_a = np.asarray(cols_a)
    row_ov = np.maximum(0, grid.vp_rows - np.abs(rows_a - np.asarray(rows_b)))
    delta = np.mod(cols_a - np.asarray(cols_b), grid.n_cols)
    col_ov = np.maximum(0, grid.vp_cols - delta) + np.maximum(
        0, grid.vp_cols - (grid.n_cols - delta)
    )
    col_ov = np.minimum(col_ov, grid.vp_cols)
    return row_ov * col_ov
