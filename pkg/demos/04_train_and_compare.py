#!/usr/bin/env python3
"""Full training runs: baseline vs weight-update skipping.

Trains a small MLP on synthetic class blobs under all three variants, prints
per-epoch telemetry from the emitted CSV, and ends with the comparison table
plus the closed-form update-count check against the instrumented ledger.

Run:  python demos/04_train_and_compare.py
"""

import tempfile
from pathlib import Path

from wustrain import ExperimentConfig, compare, run
from wustrain.metrics import read_epochs_csv, read_summary

out = Path(tempfile.mkdtemp(prefix="wustrain-demo-"))
base = {
    "model": "mlp-small",
    "dataset": "synthetic",
    "synthetic_samples": 1600,
    "synthetic_val_samples": 400,
    "synthetic_classes": 6,
    "synthetic_shape": [1, 8, 8],
    "epochs": 24,
    "batch_size": 128,
    "seed": 0,
    "patience": 3,
}

dirs = {}
for variant in ("baseline", "wus", "wus-lr"):
    cfg = ExperimentConfig.from_dict(
        {**base, "variant": variant, "out_dir": str(out / variant)}
    )
    artifacts = run(cfg)
    dirs[variant] = artifacts.run_dirs[0]
    print(f"trained {variant:<9s} -> {artifacts.run_dirs[0]}")

print("\nper-epoch telemetry of the wus run:")
print(f"{'epoch':>5} {'phase':<10} {'train_loss':>10} {'val_acc':>8} "
      f"{'bwd_s':>8} {'bwd_MACs':>12} {'w_upd':>8} {'b_upd':>6}")
for row in read_epochs_csv(dirs["wus"]):
    print(f"{row['epoch']:>5} {row['phase']:<10} {float(row['train_loss']):>10.4f} "
          f"{float(row['val_acc']):>8.2f} {float(row['backward_s']):>8.4f} "
          f"{int(row['backward_flops']):>12,} {row['weights_updated']:>8} "
          f"{row['biases_updated']:>6}")

summary = read_summary(dirs["wus"])
print(f"\nupdate accounting: ledger total {summary['updates_total']:,} == "
      f"closed-form prediction {summary['predicted_updates']:,} "
      f"-> {summary['ledger_matches_prediction']}")
print(f"(all-biases variant of the formula would give "
      f"{summary['predicted_updates_all_biases']:,})")

print("\ncomparison against baseline:")
print(compare(dirs["baseline"], dirs["wus"], dirs["wus-lr"]).table())
