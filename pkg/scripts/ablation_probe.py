"""Direction check for the temporal-transformer ablation (development aid)."""

import argparse
import time

import numpy as np

from tilecast.data import SplitSpec, build_windows, split_dataset, synth_dataset
from tilecast.geometry import TileGrid
from tilecast.metrics import evaluate
from tilecast.model import ModelConfig
from tilecast.model.extractor import StubExtractor
from tilecast.training import TrainConfig, train
from dataclasses import replace


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    grid = TileGrid()
    records, frames = synth_dataset(2, 60, seed=0, grid=grid)
    samples = build_windows(records, frames, 5, 5, grid, extractor=StubExtractor(dim=1000))
    tr, va, te = split_dataset(samples, SplitSpec(seed=0))
    base_model = ModelConfig(
        d_model=64, c_head=32, c_eye=32, recurrent_layers=2, recurrent_hidden=32,
        n_encoder_layers=2, n_attention_heads=4, ffn_hidden=128,
        pos_head_hidden=(32, 16), tile_head_hidden=64,
    )
    for seed in args.seeds:
        row = {}
        for name, mcfg in (
            ("full", base_model),
            ("wo_temporal", replace(base_model, no_temporal_transformer=True)),
        ):
            cfg = TrainConfig(model=mcfg, lr=args.lr, batch_size=16,
                              max_epochs=args.epochs, early_stop_patience=args.epochs,
                              seed=seed, dtype="float32")
            t0 = time.perf_counter()
            record, model = train(cfg, tr, va, grid)
            report = evaluate(model, va)
            row[name] = (report.per_horizon[-1]["ap"], record.best_val_ap,
                         round(time.perf_counter() - t0, 1))
        ok = row["wo_temporal"][0] < row["full"][0]
        print(f"seed {seed}: full AP@5 {row['full']}, wo_temporal {row['wo_temporal']} -> {'OK' if ok else 'FAIL'}", flush=True)


if __name__ == "__main__":
    main()
