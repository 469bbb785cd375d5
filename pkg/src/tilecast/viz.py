"""Dependency-light raster rendering of score maps and viewport rectangles."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .geometry import TileGrid, ViewportAnchor

# dark blue -> cyan -> yellow gradient anchors for score intensity
_STOPS = np.array(
    [
        (0.0, (20, 24, 60)),
        (0.5, (40, 160, 190)),
        (1.0, (250, 220, 60)),
    ],
    dtype=object,
)


def _colormap(values: np.ndarray) -> np.ndarray:
    v = np.clip(values, 0.0, 1.0)
    out = np.zeros(v.shape + (3,), dtype=np.float64)
    stops = [(float(p), np.array(c, dtype=np.float64)) for p, c in _STOPS]
    for (p0, c0), (p1, c1) in zip(stops, stops[1:]):
        mask = (v >= p0) & (v <= p1)
        w = np.zeros_like(v)
        w[mask] = (v[mask] - p0) / (p1 - p0)
        out[mask] = c0 + w[mask][..., None] * (c1 - c0)
    return out.astype(np.uint8)


def _viewport_rects(anchor: ViewportAnchor, grid: TileGrid, px: int):
    """Pixel rectangles of a viewport; the column wrap renders as two boxes."""
    top = anchor.row * px
    bottom = (anchor.row + grid.vp_rows) * px - 1
    end_col = anchor.col + grid.vp_cols
    if end_col <= grid.n_cols:
        return [(anchor.col * px, top, end_col * px - 1, bottom)]
    return [
        (anchor.col * px, top, grid.n_cols * px - 1, bottom),
        (0, top, (end_col - grid.n_cols) * px - 1, bottom),
    ]


def render_score_heatmap(
    score_map: np.ndarray,
    grid: TileGrid,
    pred_anchor: ViewportAnchor | None = None,
    gt_anchor: ViewportAnchor | None = None,
    px: int = 24,
) -> Image.Image:
    """Heatmap of one score map with predicted (red) and ground-truth (yellow)
    viewport rectangles; wrapped viewports draw split at the frame edge."""
    score_map = np.asarray(score_map, dtype=np.float64)
    if score_map.shape != (grid.n_rows, grid.n_cols):
        raise ValueError(f"score map shape {score_map.shape} != grid {(grid.n_rows, grid.n_cols)}")
    tiles = _colormap(score_map)
    img = np.repeat(np.repeat(tiles, px, axis=0), px, axis=1)
    image = Image.fromarray(img)
    draw = ImageDraw.Draw(image)
    for r in range(grid.n_rows + 1):  # faint tile grid
        draw.line([(0, r * px), (grid.n_cols * px, r * px)], fill=(70, 70, 70), width=1)
    for c in range(grid.n_cols + 1):
        draw.line([(c * px, 0), (c * px, grid.n_rows * px)], fill=(70, 70, 70), width=1)
    if gt_anchor is not None:
        for rect in _viewport_rects(gt_anchor, grid, px):
            draw.rectangle(rect, outline=(250, 210, 0), width=3)
    if pred_anchor is not None:
        for rect in _viewport_rects(pred_anchor, grid, px):
            draw.rectangle(rect, outline=(220, 30, 30), width=3)
    return image
