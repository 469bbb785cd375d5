import numpy as np
import pytest

from tilecast.geometry import TileGrid, ViewportAnchor
from tilecast.viz import _viewport_rects, render_score_heatmap

GRID = TileGrid()


def test_heatmap_size_and_mode():
    rng = np.random.default_rng(0)
    img = render_score_heatmap(rng.random((10, 20)), GRID, px=16)
    assert img.size == (20 * 16, 10 * 16)
    assert img.mode == "RGB"


def test_heatmap_rejects_wrong_shape():
    with pytest.raises(ValueError):
        render_score_heatmap(np.zeros((5, 5)), GRID)


def test_viewport_rect_plain_spans_4x9_tiles():
    px = 10
    (rect,) = _viewport_rects(ViewportAnchor(3, 5), GRID, px)
    left, top, right, bottom = rect
    assert (right - left + 1) == 9 * px
    assert (bottom - top + 1) == 4 * px
    assert left == 5 * px and top == 3 * px


def test_viewport_rect_wrap_splits_into_two():
    px = 10
    rects = _viewport_rects(ViewportAnchor(0, 18), GRID, px)
    assert len(rects) == 2
    widths = [(r[2] - r[0] + 1) // px for r in rects]
    assert sorted(widths) == [2, 7]  # cols 18-19 and 0-6
    assert rects[0][0] == 18 * px and rects[1][0] == 0


def test_heatmap_with_anchors_draws():
    rng = np.random.default_rng(1)
    img = render_score_heatmap(
        rng.random((10, 20)),
        GRID,
        pred_anchor=ViewportAnchor(3, 18),
        gt_anchor=ViewportAnchor(3, 5),
        px=12,
    )
    arr = np.asarray(img)
    # the predicted rectangle's red outline must appear on both frame edges (wrap)
    reds = (arr[:, :, 0] > 180) & (arr[:, :, 1] < 90) & (arr[:, :, 2] < 90)
    cols_with_red = np.nonzero(reds.any(axis=0))[0]
    assert cols_with_red.min() < 12 * 7
    assert cols_with_red.max() >= 12 * 18
