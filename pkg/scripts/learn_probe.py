"""Learning-dynamics probe on the synthetic overfit task (development aid)."""

import argparse
import time

import numpy as np

from tilecast.data import SplitSpec, build_windows, split_dataset, synth_dataset
from tilecast.geometry import TileGrid
from tilecast.model import ModelConfig
from tilecast.model.extractor import StubExtractor
from tilecast.training import TrainConfig, train


def model_for(size: str) -> ModelConfig:
    if size == "default":
        return ModelConfig()
    if size == "small":
        return ModelConfig(
            d_model=64, c_head=32, c_eye=32, recurrent_layers=2, recurrent_hidden=32,
            n_encoder_layers=2, n_attention_heads=4, ffn_hidden=128,
            pos_head_hidden=(32, 16), tile_head_hidden=64,
        )
    if size == "mid":
        return ModelConfig(
            d_model=128, c_head=64, c_eye=64, recurrent_layers=2, recurrent_hidden=64,
            n_encoder_layers=4, n_attention_heads=4, ffn_hidden=256,
            pos_head_hidden=(64, 32), tile_head_hidden=128,
        )
    raise SystemExit(f"unknown size {size}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", default="small")
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--stop-ap", type=float, default=0.95)
    ap.add_argument("--streams", type=int, default=2)
    ap.add_argument("--seconds", type=int, default=60)
    args = ap.parse_args()

    grid = TileGrid()
    records, frames = synth_dataset(args.streams, args.seconds, seed=0, grid=grid)
    samples = build_windows(records, frames, 5, 5, grid, extractor=StubExtractor(dim=1000))
    tr, va, te = split_dataset(samples, SplitSpec(seed=0))
    print(f"split {len(tr)}/{len(va)}/{len(te)}", flush=True)
    cfg = TrainConfig(
        model=model_for(args.size), lr=args.lr, batch_size=16, max_epochs=args.epochs,
        early_stop_patience=10_000, seed=args.seed, dtype="float32",
    )
    t0 = time.perf_counter()
    record, model = train(cfg, tr, va, grid, stop_at_train_ap=args.stop_ap)
    for e in record.epochs:
        print({k: (round(v, 4) if isinstance(v, float) else v) for k, v in e.items()}, flush=True)
    print(f"{time.perf_counter() - t0:.0f}s, {len(record.epochs)} epochs", flush=True)


if __name__ == "__main__":
    main()
