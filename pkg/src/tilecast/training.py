"""Supervised training loop, early stopping, checkpointing, and sweep driver.

Runs are reproducible for a given seed on one hardware/backend configuration;
bitwise equality across different BLAS builds or kernel backends is not
promised.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .data.windows import SplitSpec, collate_samples
from .geometry import TileGrid
from .metrics import evaluate
from .model.checkpoint import save_checkpoint
from .model.losses import loss_cls, loss_pos, total_loss
from .model.network import ModelConfig, ViewportTransformer

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch_index: int, value: float):
        super().__init__(
            f"non-finite loss ({value}) at epoch {epoch}, batch {batch_index}; "
            "consider lowering lr or enabling grad_clip"
        )
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 200
    early_stop_patience: int = 10  # epochs without val-AP improvement
    seed: int = 0
    # optimizer details beyond the headline lr (decoupled weight decay)
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float | None = None  # global-norm clip, off by default
    dtype: str = "float32"

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.early_stop_patience < 1:
            raise ValueError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        self.model.validate()


def config_hash(cfg: TrainConfig, grid: TileGrid) -> str:
    blob = json.dumps({"train": asdict(cfg), "grid": asdict(grid)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class AdamW:
    """Decoupled weight decay Adam over a parameter list (fused kernel update)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:  # parameter off the active path (ablations)
                continue
            kernels.adamw_update(
                p.data, p.grad, m, v,
                self.lr, self.beta1, self.beta2, self.eps, self.weight_decay, bc1, bc2,
            )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def _clip_global_norm(params, max_norm: float) -> None:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale


@dataclass
class RunRecord:
    config_hash: str
    variant: str
    epochs: list[dict]  # per-epoch train loss terms and val metrics
    best_epoch: int
    best_val_ap: float
    best_val_ao: float
    stopped_early: bool
    wall_time_s: float
    checkpoint_path: str | None = None

    def to_json_dict(self) -> dict:
        return asdict(self)

    def write(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "run_record.json").write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
        import csv

        with open(run_dir / "run_record.csv", "w", newline="") as fh:
            names = ["epoch", "train_loss", "loss_pos", "loss_cls", "val_ap", "val_ao"]
            writer = csv.DictWriter(fh, fieldnames=names)
            writer.writeheader()
            writer.writerows(self.epochs)


def train(
    cfg: TrainConfig,
    train_samples,
    val_samples,
    grid: TileGrid | None = None,
    run_dir: str | Path | None = None,
    variant: str = "MFTR",
    stop_at_train_ap: float | None = None,
):
    """Minimize the blended objective; returns (RunRecord, best model).

    Early stopping tracks validation AP at the full horizon; the retained
    checkpoint is the best-val epoch. ``stop_at_train_ap`` optionally ends
    the run once train-split AP at horizon 1 reaches the target (used by
    overfit smoke tests).
    """
    cfg.validate()
    grid = grid or TileGrid()
    if not train_samples or not val_samples:
        raise ValueError("train and validation splits must be non-empty")
    dtype = np.dtype(cfg.dtype)
    model = ViewportTransformer(cfg.model, grid, seed=cfg.seed, dtype=dtype)
    opt = AdamW(
        model.parameters(),
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    started = time.perf_counter()
    epochs: list[dict] = []
    best = {"epoch": 0, "val_ap": -1.0, "val_ao": -1.0, "params": None}
    since_improve = 0
    stopped_early = False
    n = len(train_samples)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        sums = {"train_loss": 0.0, "loss_pos": 0.0, "loss_cls": 0.0}
        seen = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            chunk = [train_samples[i] for i in perm[start : start + cfg.batch_size]]
            head, eye, frames, gt_heads, gt_anchors = collate_samples(chunk, dtype=dtype)
            hp, scores = model.forward_tensors(head, eye, frames)
            lp = None if hp is None else loss_pos(hp, gt_heads)
            lc = None
            if scores is not None:
                masks = _anchor_masks(gt_anchors, grid, dtype)
                lc = loss_cls(scores, masks)
            loss = total_loss(lp, lc, cfg.model)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, bi, value)
            loss.backward()
            if cfg.grad_clip is not None:
                _clip_global_norm(opt.params, cfg.grad_clip)
            opt.step()
            opt.zero_grad()
            b = len(chunk)
            sums["train_loss"] += value * b
            sums["loss_pos"] += (0.0 if lp is None else lp.item()) * b
            sums["loss_cls"] += (0.0 if lc is None else lc.item()) * b
            seen += b
        report = evaluate(model, val_samples, batch_size=max(cfg.batch_size, 64))
        row = {
            "epoch": epoch,
            "train_loss": sums["train_loss"] / seen,
            "loss_pos": sums["loss_pos"] / seen,
            "loss_cls": sums["loss_cls"] / seen,
            "val_ap": report.overall["ap"],
            "val_ao": report.overall["ao"],
        }
        epochs.append(row)
        log.info(
            "epoch %d: loss %.4f, val AP %.3f, val AO %.3f",
            epoch, row["train_loss"], row["val_ap"], row["val_ao"],
        )
        if row["val_ap"] > best["val_ap"]:
            best = {
                "epoch": epoch,
                "val_ap": row["val_ap"],
                "val_ao": row["val_ao"],
                "params": [p.data.copy() for p in model.parameters()],
            }
            since_improve = 0
        else:
            since_improve += 1
        if stop_at_train_ap is not None:
            train_report = evaluate(model, train_samples, batch_size=max(cfg.batch_size, 64))
            row["train_ap_h1"] = train_report.per_horizon[0]["ap"]
            if row["train_ap_h1"] >= stop_at_train_ap:
                break
        if since_improve >= cfg.early_stop_patience:
            stopped_early = True
            break
    if best["params"] is not None:
        for p, data in zip(model.parameters(), best["params"]):
            p.data = data
    record = RunRecord(
        config_hash=config_hash(cfg, grid),
        variant=variant,
        epochs=epochs,
        best_epoch=best["epoch"],
        best_val_ap=best["val_ap"],
        best_val_ao=best["val_ao"],
        stopped_early=stopped_early,
        wall_time_s=time.perf_counter() - started,
    )
    if run_dir is not None:
        run_dir = Path(run_dir)
        ckpt = run_dir / "best.npz"
        save_checkpoint(model, ckpt, extra={"config_hash": record.config_hash, "variant": variant})
        record.checkpoint_path = str(ckpt)
        record.write(run_dir)
    return record, model


def _anchor_masks(gt_anchors: np.ndarray, grid: TileGrid, dtype) -> np.ndarray:
    """(B, T, 2) anchors -> (B, T, n_rows, n_cols) 0/1 viewport masks."""
    b, horizon = gt_anchors.shape[:2]
    masks = np.zeros((b, horizon, grid.n_rows, grid.n_cols), dtype=dtype)
    col_offsets = np.arange(grid.vp_cols)
    for i in range(b):
        for k in range(horizon):
            row, col = gt_anchors[i, k]
            cols = (col + col_offsets) % grid.n_cols
            masks[i, k, row : row + grid.vp_rows, cols] = 1
    return masks


# --- ablation / hyperparameter sweep -----------------------------------------


def suite_variants(base: TrainConfig) -> list[tuple[str, ModelConfig]]:
    """The 14 published table rows: 5 component removals, encoder depths
    2/4/6/8, and five loss-weight pairs. The 6-layer row is the full model
    (tagged MFTR); the default weight pair shares its config, so the baseline
    trains once and backs both rows."""
    m = base.model
    rows: list[tuple[str, ModelConfig]] = [
        ("wo_temporal_transformer", replace(m, no_temporal_transformer=True)),
        ("wo_position_head", replace(m, no_position_head=True)),
        ("wo_visual_transformer", replace(m, no_visual_transformer=True)),
        ("wo_temporal_visual_fusion", replace(m, no_fusion=True)),
        ("wo_tile_classification_head", replace(m, no_tile_head=True)),
    ]
    for n_layers in (2, 4, 6, 8):
        name = "MFTR" if n_layers == m.n_encoder_layers else f"layers_{n_layers}"
        rows.append((name, replace(m, n_encoder_layers=n_layers)))
    for alpha, beta in ((0.25, 0.75), (0.30, 0.70), (0.35, 0.65), (0.40, 0.60), (0.45, 0.55)):
        name = f"alpha_{alpha:.2f}_beta_{beta:.2f}"
        rows.append((name, replace(m, alpha=alpha, beta=beta)))
    return rows


@dataclass
class SuiteRow:
    variant: str
    config_hash: str
    status: str  # "ok" | "error"
    error: str | None = None
    best_epoch: int | None = None
    best_val_ap: float | None = None
    per_horizon_ap: list[float] | None = None
    per_horizon_ao: list[float] | None = None
    wall_time_s: float | None = None


@dataclass
class SuiteResult:
    rows: list[SuiteRow]
    records: dict[str, RunRecord]  # one per unique config hash

    def row(self, variant: str) -> SuiteRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_json_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "runs": {h: rec.to_json_dict() for h, rec in self.records.items()},
        }

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation_suite.json").write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
        import csv

        horizons = max(
            (len(r.per_horizon_ap) for r in self.rows if r.per_horizon_ap), default=0
        )
        names = ["variant", "status", "best_epoch", "best_val_ap"] + [
            f"ap_{k}s" for k in range(1, horizons + 1)
        ]
        with open(out_dir / "ablation_suite.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=names, extrasaction="ignore")
            writer.writeheader()
            for r in self.rows:
                row = {
                    "variant": r.variant,
                    "status": r.status,
                    "best_epoch": r.best_epoch,
                    "best_val_ap": r.best_val_ap,
                }
                if r.per_horizon_ap:
                    row.update({f"ap_{k + 1}s": v for k, v in enumerate(r.per_horizon_ap)})
                writer.writerow(row)


def run_ablation_suite(
    base: TrainConfig,
    train_samples,
    val_samples,
    grid: TileGrid | None = None,
    run_root: str | Path | None = None,
) -> SuiteResult:
    """Train every table variant (deduplicated by config hash), evaluate on the
    validation split, and emit one row per published table entry. Failures of
    individual runs are recorded and the suite continues."""
    grid = grid or TileGrid()
    rows: list[SuiteRow] = []
    records: dict[str, RunRecord] = {}
    eval_cache: dict[str, tuple] = {}
    for variant, model_cfg in suite_variants(base):
        cfg = replace(base, model=model_cfg)
        chash = config_hash(cfg, grid)
        try:
            if chash not in records:
                run_dir = None if run_root is None else Path(run_root) / variant
                record, model = train(cfg, train_samples, val_samples, grid, run_dir, variant)
                records[chash] = record
                report = evaluate(model, val_samples)
                eval_cache[chash] = (
                    [row["ap"] for row in report.per_horizon],
                    [row["ao"] for row in report.per_horizon],
                )
            record = records[chash]
            aps, aos = eval_cache[chash]
            rows.append(
                SuiteRow(
                    variant=variant,
                    config_hash=chash,
                    status="ok",
                    best_epoch=record.best_epoch,
                    best_val_ap=record.best_val_ap,
                    per_horizon_ap=aps,
                    per_horizon_ao=aos,
                    wall_time_s=record.wall_time_s,
                )
            )
        except Exception as exc:  # record the failure, keep sweeping
            log.exception("suite variant %s failed", variant)
            rows.append(SuiteRow(variant=variant, config_hash=chash, status="error", error=str(exc)))
    result = SuiteResult(rows=rows, records=records)
    if run_root is not None:
        result.write(run_root)
    return result
