"""Run configuration files (YAML) covering every component of the pipeline.

Sections: ``grid``, ``model``, ``train``, ``split``, ``data``, ``synth``.
Every key defaults to the published experiment values; unknown sections or
keys are rejected by name. See README for the full key set.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .data.synth import SynthConfig
from .data.windows import SplitSpec
from .geometry import TileGrid
from .model.network import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataPaths:
    traces: str | None = None
    frames_root: str | None = None
    cache_descriptors: bool = True  # persist per-video descriptors beside the frames


@dataclass(frozen=True)
class RunConfig:
    grid: TileGrid = field(default_factory=TileGrid)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    data: DataPaths = field(default_factory=DataPaths)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_SECTION_TYPES = {
    "grid": TileGrid,
    "model": ModelConfig,
    "train": None,  # assembled from the flat train section plus model/split
    "split": SplitSpec,
    "data": DataPaths,
    "synth": SynthConfig,
}

_TRAIN_FIELDS = {
    f.name for f in fields(TrainConfig) if f.name not in ("model", "split")
}


def _build_section(cls, section: str, payload: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {section!r}: {', '.join(sorted(unknown))}")
    coerced = {}
    for key, value in payload.items():
        if key == "pos_head_hidden" and isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from None


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of sections")
    unknown = set(doc) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    for name, payload in doc.items():
        if payload is not None and not isinstance(payload, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
    grid = _build_section(TileGrid, "grid", doc.get("grid") or {})
    model = _build_section(ModelConfig, "model", doc.get("model") or {})
    split = _build_section(SplitSpec, "split", doc.get("split") or {})
    data = _build_section(DataPaths, "data", doc.get("data") or {})
    synth = _build_section(SynthConfig, "synth", doc.get("synth") or {})
    train_payload = dict(doc.get("train") or {})
    unknown_train = set(train_payload) - _TRAIN_FIELDS
    if unknown_train:
        raise ConfigError(
            f"unknown key(s) in section 'train': {', '.join(sorted(unknown_train))}"
        )
    train = TrainConfig(model=model, split=split, **train_payload)
    cfg = RunConfig(grid=grid, model=model, train=train, split=split, data=data, synth=synth)
    cfg.validate()
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return run_config_from_dict(doc)


def run_config_to_dict(cfg: RunConfig) -> dict:
    doc = {
        "grid": dataclasses.asdict(cfg.grid),
        "model": cfg.model.to_dict(),
        "train": {
            name: getattr(cfg.train, name) for name in sorted(_TRAIN_FIELDS)
        },
        "split": dataclasses.asdict(cfg.split),
        "data": dataclasses.asdict(cfg.data),
        "synth": dataclasses.asdict(cfg.synth),
    }
    doc["model"]["pos_head_hidden"] = list(cfg.model.pos_head_hidden)
    return doc


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(run_config_to_dict(cfg), sort_keys=True))
