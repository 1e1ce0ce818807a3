"""Update-count ledger, epoch records, parameter histograms, and run output.

The ledger counts each parameter element once per epoch: a full-update epoch
contributes w + b elements, a WUS epoch contributes only the biases of the
gated layers. predicted_updates() is the closed-form count for a whole run,
which the instrumented ledger must match with integer equality.

A run directory contains epochs.csv, events.jsonl, histograms/epoch_<n>.json
and summary.json; every file is flushed as it is written.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .network import Network

EPOCH_CSV_COLUMNS = (
    "epoch", "phase", "train_loss", "train_acc", "val_acc", "lr",
    "epoch_s", "backward_s", "backward_flops", "weights_updated", "biases_updated",
)


def predicted_updates(e_wus: int, e_normal: int, w: int, b_active: int, b_total: int) -> int:
    """Closed-form parameter-update count for a run with the given epoch split.

    WUS epochs update only the active biases; normal epochs update every
    weight and bias once.
    """
    if min(e_wus, e_normal, w, b_active, b_total) < 0:
        raise ContractError("predicted_updates inputs must be non-negative")
    return e_wus * b_active + e_normal * (b_total + w)


def predicted_updates_all_biases(e_wus: int, e_normal: int, w: int, b_total: int) -> int:
    """Variant that charges every bias to WUS epochs (reported for comparison)."""
    return predicted_updates(e_wus, e_normal, w, b_total, b_total)


def reduction_percent(baseline_total, variant_total) -> float:
    """Percent reduction of a count or duration relative to its baseline."""
    if baseline_total <= 0:
        raise ContractError(f"baseline must be positive, got {baseline_total}")
    return 100.0 * (baseline_total - variant_total) / baseline_total


@dataclass(frozen=True)
class LedgerRow:
    epoch: int
    phase: str
    weights_updated: int
    biases_updated: int


class UpdateLedger:
    """Per-epoch counts of parameter elements actually written by the optimizer."""

    def __init__(self):
        self.rows: list[LedgerRow] = []
        self._epochs: set[int] = set()

    def append(self, epoch: int, phase: str, weights_updated: int, biases_updated: int):
        if epoch in self._epochs:
            raise ContractError(f"epoch {epoch} already recorded in the ledger")
        self._epochs.add(epoch)
        self.rows.append(LedgerRow(epoch, phase, int(weights_updated), int(biases_updated)))

    @property
    def total_weights(self) -> int:
        return sum(r.weights_updated for r in self.rows)

    @property
    def total_biases(self) -> int:
        return sum(r.biases_updated for r in self.rows)

    @property
    def total_updates(self) -> int:
        return self.total_weights + self.total_biases

    def epochs_by_phase(self) -> dict:
        out: dict[str, int] = {}
        for row in self.rows:
            out[row.phase] = out.get(row.phase, 0) + 1
        return out


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    lr: float
    epoch_wall_seconds: float
    backward_wall_seconds: float
    backward_flops: int

    def validate(self) -> "EpochRecord":
        if not 0 <= self.train_accuracy <= 100 or not 0 <= self.val_accuracy <= 100:
            raise ContractError("accuracies must be in [0, 100]")
        if self.epoch_wall_seconds < 0 or self.backward_wall_seconds < 0:
            raise ContractError("wall-clock times must be non-negative")
        return self


@dataclass(frozen=True)
class TensorStats:
    """Equal-width histogram over [min, max] plus first moments."""

    minimum: float
    maximum: float
    mean: float
    mean_abs: float
    std: float
    bin_edges: tuple
    counts: tuple

    @classmethod
    def of(cls, arr: np.ndarray, bins: int) -> "TensorStats":
        flat = np.asarray(arr, dtype=np.float64).ravel()
        lo, hi = float(flat.min()), float(flat.max())
        if lo == hi:
            counts = np.zeros(bins, dtype=np.int64)
            counts[0] = flat.size
            edges = np.full(bins + 1, lo)
        else:
            counts, edges = np.histogram(flat, bins=bins, range=(lo, hi))
        return cls(
            minimum=lo, maximum=hi,
            mean=float(flat.mean()), mean_abs=float(np.abs(flat).mean()),
            std=float(flat.std()),
            bin_edges=tuple(float(e) for e in edges),
            counts=tuple(int(c) for c in counts),
        )

    def to_dict(self) -> dict:
        return {
            "min": self.minimum, "max": self.maximum,
            "mean": self.mean, "mean_abs": self.mean_abs, "std": self.std,
            "bin_edges": list(self.bin_edges), "counts": list(self.counts),
        }


@dataclass
class HistogramSet:
    epoch: int
    params: dict
    grads: dict

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "params": {k: v.to_dict() for k, v in self.params.items()},
            "grads": {k: v.to_dict() for k, v in self.grads.items()},
        }


def snapshot_histogram(net: Network, epoch: int, bins: int,
                       grads: dict | None = None) -> HistogramSet:
    """Histogram every parameter tensor (and gradient tensor, when given)."""
    if bins < 2:
        raise ContractError(f"bins must be >= 2, got {bins}")
    params = {f"layer{i}.{name}": TensorStats.of(p, bins)
              for i, name, p in net.param_items()}
    grad_stats = {}
    if grads:
        for (i, name), g in sorted(grads.items()):
            grad_stats[f"layer{i}.{name}"] = TensorStats.of(g, bins)
    return HistogramSet(epoch=epoch, params=params, grads=grad_stats)


def _fmt(value) -> str:
    # repr round-trips floats exactly, which the determinism checks rely on.
    return repr(float(value))


class RunWriter:
    """Streams one run's outputs into its directory."""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "histograms").mkdir(exist_ok=True)
        self._csv = open(self.run_dir / "epochs.csv", "w", newline="")
        self._csv_writer = csv.writer(self._csv)
        self._csv_writer.writerow(EPOCH_CSV_COLUMNS)
        self._events = open(self.run_dir / "events.jsonl", "w")

    def append_epoch(self, record: EpochRecord, weights_updated: int, biases_updated: int):
        record.validate()
        self._csv_writer.writerow([
            record.epoch, record.phase,
            _fmt(record.train_loss), _fmt(record.train_accuracy), _fmt(record.val_accuracy),
            _fmt(record.lr),
            f"{record.epoch_wall_seconds:.6f}", f"{record.backward_wall_seconds:.6f}",
            int(record.backward_flops), int(weights_updated), int(biases_updated),
        ])
        self._csv.flush()

    def append_event(self, event: dict):
        self._events.write(json.dumps(event) + "\n")
        self._events.flush()

    def write_histograms(self, hist: HistogramSet):
        path = self.run_dir / "histograms" / f"epoch_{hist.epoch}.json"
        with open(path, "w") as fh:
            json.dump(hist.to_dict(), fh)

    def finalize(self, summary: dict):
        with open(self.run_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
        self._csv.close()
        self._events.close()


def read_epochs_csv(run_dir) -> list:
    with open(Path(run_dir) / "epochs.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def read_summary(run_dir) -> dict:
    with open(Path(run_dir) / "summary.json") as fh:
        return json.load(fh)
