"""Versioned checkpoint files: parameters + full configuration.

A checkpoint is an ``.npz`` holding every named parameter under ``param/``
plus a JSON metadata blob: format version, model config, tile grid,
extractor identity, init seed and dtype. Loading with an expected config
fails naming the first mismatching field.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..geometry import TileGrid
from .network import ModelConfig, ViewportTransformer

FORMAT_VERSION = 1


class CheckpointMismatchError(ValueError):
    pass


def save_checkpoint(model: ViewportTransformer, path: str | Path, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "grid": asdict(model.grid),
        "extractor": model.extractor.identity,
        "seed": model.seed,
        "dtype": model.dtype.name,
    }
    if extra:
        meta["extra"] = extra
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(
    path: str | Path,
    expect_config: ModelConfig | None = None,
    expect_grid: TileGrid | None = None,
):
    """Rebuild the model from a checkpoint; returns (model, meta)."""
    path = Path(path)
    with np.load(path) as blob:
        if "__meta__" not in blob:
            raise CheckpointMismatchError(f"{path} is not a tilecast checkpoint")
        meta = json.loads(bytes(blob["__meta__"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointMismatchError(
                f"checkpoint format {meta.get('format_version')} != supported {FORMAT_VERSION}"
            )
        cfg = ModelConfig.from_dict(meta["model_config"])
        grid = TileGrid(**meta["grid"])
        if expect_config is not None:
            for key, want in expect_config.to_dict().items():
                got = meta["model_config"].get(key)
                got_cmp = tuple(got) if isinstance(got, list) else got
                if got_cmp != want:
                    raise CheckpointMismatchError(
                        f"config field {key!r}: checkpoint has {got!r}, expected {want!r}"
                    )
        if expect_grid is not None and asdict(expect_grid) != meta["grid"]:
            raise CheckpointMismatchError(
                f"grid mismatch: checkpoint {meta['grid']} vs expected {asdict(expect_grid)}"
            )
        model = ViewportTransformer(cfg, grid, seed=meta["seed"], dtype=np.dtype(meta["dtype"]))
        stored = {k[len("param/") :] for k in blob.files if k.startswith("param/")}
        expected = {name for name, _ in model.named_parameters()}
        if stored != expected:
            missing = sorted(expected - stored)
            surplus = sorted(stored - expected)
            raise CheckpointMismatchError(
                f"parameter set mismatch (missing {missing[:3]}, surplus {surplus[:3]})"
            )
        for name, p in model.named_parameters():
            arr = blob[f"param/{name}"]
            if arr.shape != p.data.shape:
                raise CheckpointMismatchError(
                    f"parameter {name!r} shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = np.ascontiguousarray(arr)
    return model, meta
