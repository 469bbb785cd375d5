"""Command-line entry points.

    tilecast synth        --config cfg.yaml --out data/
    tilecast train        --config cfg.yaml [--out runs/] [--seed N]
    tilecast eval         --config cfg.yaml --checkpoint best.npz --split test [--out DIR]
    tilecast predict      --config cfg.yaml --checkpoint best.npz --split test --index 0 --out DIR [--heatmap]
    tilecast bench-delay  --checkpoint best.npz [--out DIR]
    tilecast bench-kernels [--repeat-scale X] [--out DIR]
    tilecast ablate       --config cfg.yaml [--out runs/] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
divergence. The kernel backend is selected by the TILECAST_KERNELS
environment variable (auto | numba | numpy).

A --seed N override fans out deterministically: synth uses N, training N+1,
splitting N+2, so partial reruns stay reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .benchmark import bench_kernels, format_table
from .config import ConfigError, RunConfig, load_run_config
from .data.frames import DirectoryFrameSource, FrameLookupError, write_frames
from .data.synth import synth_dataset
from .data.traces import TraceFormatError, load_traces, save_traces
from .data.windows import DescriptorCache, WindowCounters, build_windows, split_dataset
from .metrics import bench_delay, evaluate
from .model.checkpoint import CheckpointMismatchError, load_checkpoint
from .model.extractor import get_extractor
from .training import TrainingDivergedError, config_hash, run_ablation_suite, train
from .viz import render_score_heatmap

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class DataError(RuntimeError):
    pass


def _apply_seed_override(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    synth = dataclasses.replace(cfg.synth, seed=seed)
    train_cfg = dataclasses.replace(cfg.train, seed=seed + 1)
    split = dataclasses.replace(cfg.split, seed=seed + 2)
    train_cfg = dataclasses.replace(train_cfg, split=split)
    return dataclasses.replace(cfg, synth=synth, train=train_cfg, split=split)


def _load_dataset(cfg: RunConfig):
    if not cfg.data.traces or not cfg.data.frames_root:
        raise DataError(
            "config data.traces and data.frames_root must point at a dataset; "
            "generate one with `tilecast synth`"
        )
    traces_path = Path(cfg.data.traces)
    frames_root = Path(cfg.data.frames_root)
    if not traces_path.exists():
        raise DataError(f"trace file {traces_path} not found; run `tilecast synth` first")
    if not frames_root.is_dir():
        raise DataError(f"frame root {frames_root} not found; run `tilecast synth` first")
    records = load_traces(traces_path)
    frames = DirectoryFrameSource(frames_root)
    extractor = get_extractor(cfg.model.extractor, dim=cfg.model.descriptor_dim)
    counters = WindowCounters()
    cache = DescriptorCache(frames_root) if cfg.data.cache_descriptors else None
    samples = build_windows(
        records,
        frames,
        cfg.model.history_len,
        cfg.model.horizon,
        cfg.grid,
        extractor=extractor,
        counters=counters,
        cache=cache,
    )
    if not samples:
        raise DataError("dataset produced zero windows; check trace/frame coverage")
    parts = split_dataset(samples, cfg.split)
    return dict(zip(("train", "val", "test"), parts)), counters


def _split_arg(parser):
    parser.add_argument("--split", choices=("train", "val", "test"), default="test")


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _apply_seed_override(load_run_config(args.config), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, frames = synth_dataset(grid=cfg.grid, cfg=cfg.synth)
    traces_path = out / "traces.jsonl"
    save_traces(records, traces_path)
    n_frames = write_frames(frames, out / "frames")
    counters = WindowCounters()
    windows = build_windows(
        records, frames, cfg.model.history_len, cfg.model.horizon, cfg.grid, counters=counters
    )
    digest = hashlib.sha256(traces_path.read_bytes())
    for png in sorted((out / "frames").rglob("*.png")):
        digest.update(png.read_bytes())
    manifest = {
        "n_streams": cfg.synth.n_streams,
        "seconds_per_stream": cfg.synth.seconds_per_stream,
        "seed": cfg.synth.seed,
        "n_records": len(records),
        "n_frames": n_frames,
        "n_windows": len(windows),
        "content_sha256": digest.hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _apply_seed_override(load_run_config(args.config), args.seed)
    parts, _ = _load_dataset(cfg)
    if not parts["train"] or not parts["val"]:
        raise DataError("train/val splits are empty; need more data or different fractions")
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(args.out) / f"{config_hash(cfg.train, cfg.grid)[:12]}-{stamp}"
    record, _ = train(cfg.train, parts["train"], parts["val"], cfg.grid, run_dir=run_dir)
    print(
        json.dumps(
            {
                "run_dir": str(run_dir),
                "best_epoch": record.best_epoch,
                "best_val_ap": record.best_val_ap,
                "best_val_ao": record.best_val_ao,
                "epochs_run": len(record.epochs),
                "stopped_early": record.stopped_early,
                "checkpoint": record.checkpoint_path,
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _apply_seed_override(load_run_config(args.config), args.seed)
    model, _ = load_checkpoint(args.checkpoint, expect_config=cfg.model, expect_grid=cfg.grid)
    parts, _ = _load_dataset(cfg)
    samples = parts[args.split]
    if not samples:
        raise DataError(f"split {args.split!r} is empty")
    report = evaluate(model, samples)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    json_path = out_dir / f"eval_{args.split}.json"
    report.write(json_path, out_dir / f"eval_{args.split}.csv")
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _apply_seed_override(load_run_config(args.config), args.seed)
    model, _ = load_checkpoint(args.checkpoint, expect_config=cfg.model, expect_grid=cfg.grid)
    parts, _ = _load_dataset(cfg)
    samples = parts[args.split]
    if not (0 <= args.index < len(samples)):
        raise DataError(f"--index {args.index} out of range for split of {len(samples)} samples")
    sample = samples[args.index]
    result = model.forward(sample.head_hist, sample.eye_hist, sample.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .geometry import ViewportAnchor

    summary = {
        "meta": sample.meta,
        "gamma": model.cfg.gamma,
        "pred_anchors": [list(map(int, a)) for a in result.anchors],
        "gt_anchors": [list(map(int, a)) for a in sample.gt_anchors],
        "head_pred": None if result.head_pred is None else result.head_pred.tolist(),
    }
    (out / "prediction.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    horizon = result.anchors.shape[0]
    for k in range(horizon):
        if result.score_maps is not None:
            np.savetxt(out / f"score_map_{k + 1}.csv", result.score_maps[k], fmt="%.6f", delimiter=",")
            mask = (result.score_maps[k] > model.cfg.gamma).astype(np.uint8)
            np.savetxt(out / f"interest_mask_{k + 1}.csv", mask, fmt="%d", delimiter=",")
            if args.heatmap:
                image = render_score_heatmap(
                    result.score_maps[k],
                    model.grid,
                    pred_anchor=ViewportAnchor(*map(int, result.anchors[k])),
                    gt_anchor=ViewportAnchor(*map(int, sample.gt_anchors[k])),
                )
                image.save(out / f"heatmap_{k + 1}.png")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench_delay(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    report = bench_delay(
        model, batch_size=args.batch_size, n_warmup=args.warmup, n_trials=args.trials
    )
    doc = report.to_json_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "delay.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench_kernels(args) -> int:
    rows = bench_kernels(repeat_scale=args.repeat_scale)
    print(format_table(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "kernel_bench.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _apply_seed_override(load_run_config(args.config), args.seed)
    parts, _ = _load_dataset(cfg)
    if not parts["train"] or not parts["val"]:
        raise DataError("train/val splits are empty; need more data or different fractions")
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_root = Path(args.out) / f"ablation-{config_hash(cfg.train, cfg.grid)[:12]}-{stamp}"
    result = run_ablation_suite(cfg.train, parts["train"], parts["val"], cfg.grid, run_root)
    print(json.dumps(result.to_json_dict()["rows"], indent=2, sort_keys=True))
    failures = [r for r in result.rows if r.status != "ok"]
    return EXIT_OK if not failures else EXIT_DIVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilecast",
        description="Tile-classification viewport forecasting for 360-degree video",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run config YAML")
        p.add_argument("--seed", type=int, default=None, help="master seed override")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--out", default="runs", help="run directory root")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    _split_arg(p)
    p.add_argument("--out", default=None, help="report directory (default: checkpoint dir)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="dump score maps and anchors for one sample")
    common(p)
    p.add_argument("--checkpoint", required=True)
    _split_arg(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap", action="store_true", help="also render heatmap PNGs")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("bench-delay", help="median forward latency of one batch")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench_delay)

    p = sub.add_parser("bench-kernels", help="compare numba vs numpy kernel backends")
    p.add_argument("--repeat-scale", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bench_kernels)

    p = sub.add_parser("ablate", help="run the component/layers/loss-weight sweep")
    common(p)
    p.add_argument("--out", default="runs", help="suite directory root")
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceFormatError, FrameLookupError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
