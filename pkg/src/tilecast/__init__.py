"""Tile-classification viewport forecasting for 360-degree video."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    GazePosition,
    HeadPosition,
    TileGrid,
    ViewportAnchor,
    head_to_frame,
    nearest_viewport,
    overlap_count,
    select_viewport,
    tile_of,
    viewport_mask,
)
from .model import (  # noqa: F401
    ModelConfig,
    ViewportTransformer,
    load_checkpoint,
    save_checkpoint,
)
from .metrics import EvalReport, ao, ap, bench_delay, evaluate  # noqa: F401
from .training import RunRecord, TrainConfig, run_ablation_suite, train  # noqa: F401
