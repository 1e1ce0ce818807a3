#!/usr/bin/env python3
"""Parameter/gradient histograms and binary snapshots.

Trains a toy net while snapshotting histograms every epoch, then renders the
weight-gradient distribution as ASCII sparklines: the mass collapses toward
zero while biases keep moving, which is the observation the skipping phase
exploits. Finishes with a binary snapshot round trip.

Run:  python demos/06_histograms_and_snapshots.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from wustrain import ExperimentConfig, build_network, load_parameters, load_snapshot, run
from wustrain.presets import model_layers

out = Path(tempfile.mkdtemp(prefix="wustrain-hist-"))
cfg = ExperimentConfig.from_dict({
    "model": "mlp-small",
    "dataset": "synthetic",
    "synthetic_samples": 960,
    "synthetic_val_samples": 240,
    "synthetic_classes": 6,
    "synthetic_shape": [1, 8, 8],
    "epochs": 16,
    "batch_size": 64,
    "seed": 0,
    "histogram_every": 1,
    "histogram_bins": 32,
    "save_snapshot": True,
    "out_dir": str(out),
})
run_dir = run(cfg).run_dirs[0]

BARS = " .:-=+*#%@"


def spark(counts):
    top = max(counts) or 1
    return "".join(BARS[min(int(c / top * (len(BARS) - 1)), len(BARS) - 1)] for c in counts)


print("weight-gradient distribution of layer1.weight over training:")
print(f"{'epoch':>5} {'mean|g|':>10}  histogram (equal-width bins over [min, max])")
for epoch in range(0, 16, 3):
    with open(run_dir / "histograms" / f"epoch_{epoch}.json") as fh:
        snap = json.load(fh)
    g = snap["grads"]["layer1.weight"]
    print(f"{epoch:>5} {g['mean_abs']:>10.2e}  |{spark(g['counts'])}|")

print("\nbias means keep drifting while weight gradients die down:")
for epoch in (0, 5, 10, 15):
    with open(run_dir / "histograms" / f"epoch_{epoch}.json") as fh:
        snap = json.load(fh)
    b = snap["params"]["layer3.bias"]
    print(f"  epoch {epoch:>2}: bias mean {b['mean']:+.4f}, std {b['std']:.4f}")

print("\nbinary snapshot round trip:")
version, layer_count, tensors = load_snapshot(run_dir / "final.wusm")
print(f"  magic WUSM, version {version}, {layer_count} layers, "
      f"{len(tensors)} tensors")
fresh = build_network(model_layers("mlp-small", 6), (1, 8, 8), init_seed=999)
load_parameters(fresh, tensors)
restored = all(
    np.array_equal(tensors[name], arr) for name, arr in fresh.state_items()
)
print(f"  parameters restored bitwise into a fresh network: {restored}")
