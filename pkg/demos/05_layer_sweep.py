#!/usr/bin/env python3
"""Sweeping k: how many layers keep their bias updates during skipping.

Reproduces the tradeoff analysis between training-cost reduction and accuracy
as k grows from 1 (only the last layer's biases update) toward the full depth.

Run:  python demos/05_layer_sweep.py
"""

import tempfile
from pathlib import Path

from wustrain import ExperimentConfig, sweep_layers

out = Path(tempfile.mkdtemp(prefix="wustrain-sweep-"))
cfg = ExperimentConfig.from_dict({
    "model": "cnn-small",
    "dataset": "synthetic",
    "synthetic_samples": 1200,
    "synthetic_val_samples": 300,
    "synthetic_classes": 6,
    "synthetic_shape": [3, 16, 16],
    "epochs": 12,
    "batch_size": 128,
    "seed": 0,
    "patience": 3,
    "out_dir": str(out),
})

report = sweep_layers(cfg, k_values=[1, 2, 3])
print(f"baseline mean final accuracy: {report.baseline['mean_final_val_acc']:.2f}%")
print(f"{'k':>3} {'time_red%':>10} {'bwd_red%':>10} {'flops_red%':>11} "
      f"{'MACs/sample':>12} {'final_acc':>10} {'acc_delta':>10}")
for row in report.rows:
    print(f"{row['k']:>3} {row['time_reduction_pct']:>10.2f} "
          f"{row['backward_time_reduction_pct']:>10.2f} "
          f"{row['flops_reduction_pct']:>11.2f} "
          f"{row['wus_backward_flops_per_sample']:>12,} "
          f"{row['final_val_acc']:>10.2f} {row['acc_delta_pct_points']:>10.2f}")
print(f"\nraw artifacts under {out}")
