"""Experiment runner: config parsing, the training loop, sweeps, comparisons.

A config file fully determines a run (wall-clock timing columns aside). Every
recipe constant is a named default, so training with an empty config runs the
standard schedule: SGD momentum 0.9, weight decay 1e-4, batch 128, 200 epochs,
lr 0.1 divided by 10 every 30 epochs, WUS threshold 0.71, patience 7, k = 1.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics
from .controller import ControllerConfig, PhaseController, Variant
from .errors import ConfigError, ContractError, TrainingDivergedError
from .network import GatePlan, Network, build_network, save_snapshot, softmax_cross_entropy
from .optim import SgdConfig, SgdState, UpdateCounts, lr_at_epoch, sgd_step
from .presets import model_layers

DATA_ROOT_ENV = "WUSTRAIN_DATA_ROOT"


@dataclass
class ExperimentConfig:
    model: object = "mlp-small"
    dataset: str = "synthetic"
    dataset_path: str | None = None
    idx_images: str | None = None
    idx_labels: str | None = None
    variant: str = "baseline"
    seed: int = 0
    repeats: int = 1
    out_dir: str = "runs/experiment"
    precision: str = "float32"

    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_step_epochs: int = 30
    lr_gamma: float = 0.1

    std_threshold: float = 0.71
    std_window: int = 5
    patience: int = 7
    delta: float = 0.0
    depth_k: int = 1
    normal_interlude_epochs: int = 1
    reset_momentum_on_skip: bool = False

    train_limit: int | None = None
    val_limit: int | None = None
    synthetic_samples: int = 2400
    synthetic_val_samples: int = 600
    synthetic_classes: int = 10
    synthetic_shape: tuple = (3, 8, 8)
    pixel_scale: bool = True

    histogram_every: int = 0
    histogram_bins: int = 64
    save_snapshot: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        return cfg.validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def validate(self) -> "ExperimentConfig":
        Variant.parse(self.variant)
        if self.dataset not in ("cifar10", "idx", "synthetic"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.histogram_every < 0 or self.histogram_bins < 2:
            raise ConfigError("histogram_every must be >= 0 and histogram_bins >= 2")
        self.synthetic_shape = tuple(int(d) for d in self.synthetic_shape)
        model_layers(self.model, classes=10)  # structural check only
        self.sgd_config().validate()
        self.controller_config().validate()
        return self

    def sgd_config(self) -> SgdConfig:
        return SgdConfig(
            learning_rate_init=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            step_size_epochs=self.lr_step_epochs,
            gamma=self.lr_gamma,
            batch_size=self.batch_size,
            epochs=self.epochs,
        )

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            variant=Variant.parse(self.variant),
            std_threshold=self.std_threshold,
            std_window=self.std_window,
            patience=self.patience,
            delta=self.delta,
            depth_k=self.depth_k,
            normal_interlude_epochs=self.normal_interlude_epochs,
        )

    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


def load_datasets(cfg: ExperimentConfig) -> tuple:
    """Resolve the configured dataset into (train, val) Datasets."""
    root_override = os.environ.get(DATA_ROOT_ENV)
    if cfg.dataset == "cifar10":
        path = root_override or cfg.dataset_path
        if not path:
            raise ConfigError(
                f"dataset 'cifar10' needs dataset_path or ${DATA_ROOT_ENV}"
            )
        train, val = data_mod.load_cifar10(path, scale=cfg.pixel_scale)
    elif cfg.dataset == "idx":
        images, labels = cfg.idx_images, cfg.idx_labels
        if root_override and images and labels:
            images = str(Path(root_override) / Path(images).name)
            labels = str(Path(root_override) / Path(labels).name)
        if not images or not labels:
            raise ConfigError("dataset 'idx' needs idx_images and idx_labels paths")
        full = data_mod.load_idx(images, labels)
        split = int(round(len(full) * 0.8))
        train = data_mod.Dataset(full.images[:split], full.labels[:split], full.class_count)
        val = data_mod.Dataset(full.images[split:], full.labels[split:], full.class_count)
    else:
        total = cfg.synthetic_samples + cfg.synthetic_val_samples
        full = data_mod.synthetic_dataset(
            cfg.seed, total, cfg.synthetic_classes, cfg.synthetic_shape
        )
        train = data_mod.Dataset(
            full.images[: cfg.synthetic_samples], full.labels[: cfg.synthetic_samples],
            full.class_count,
        )
        val = data_mod.Dataset(
            full.images[cfg.synthetic_samples:], full.labels[cfg.synthetic_samples:],
            full.class_count,
        )
    if cfg.train_limit:
        train = train.subset(cfg.train_limit)
    if cfg.val_limit:
        val = val.subset(cfg.val_limit)
    if len(train) == 0 or len(val) == 0:
        raise ConfigError(
            f"empty split: {len(train)} train / {len(val)} validation samples"
        )
    return train, val


def evaluate(net: Network, dataset: data_mod.Dataset, batch_size: int) -> float:
    """Eval-mode validation accuracy in percent."""
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start:start + batch_size]
        y = dataset.labels[start:start + batch_size]
        logits, _ = net.forward(x, training=False)
        correct += int((logits.argmax(axis=1) == y).sum())
    return 100.0 * correct / len(dataset)


@dataclass
class RunArtifacts:
    out_dir: Path
    run_dirs: list
    aggregate: dict


def execute_run(cfg: ExperimentConfig, seed: int, run_dir) -> dict:
    """Train one seeded run; writes the run directory and returns its summary."""
    train, val = load_datasets(cfg)
    specs = model_layers(cfg.model, train.class_count)
    input_shape = train.images.shape[1:]
    net = build_network(specs, input_shape, init_seed=seed, dtype=cfg.dtype())

    sgd_cfg = cfg.sgd_config().validate()
    controller = PhaseController(cfg.controller_config(), net)
    opt_state = SgdState.for_network(net)
    plan_batches = data_mod.BatchPlan(seed=seed, batch_size=cfg.batch_size)
    ledger = metrics.UpdateLedger()
    writer = metrics.RunWriter(run_dir)

    w_total = net.weight_count()
    b_total = net.bias_count()
    b_active = net.bias_count_last_k(cfg.depth_k)
    previous_entries = GatePlan.normal(net).param_entries(net)
    initial_epoch = None
    transitions = 0

    try:
        for epoch in range(cfg.epochs):
            phase = controller.state.phase
            plan = controller.plan_for_epoch()
            lr = lr_at_epoch(sgd_cfg, epoch)

            entries = plan.param_entries(net)
            if cfg.reset_momentum_on_skip:
                opt_state.reset_entries(previous_entries - entries)
            previous_entries = entries

            epoch_t0 = time.perf_counter()
            backward_seconds = 0.0
            flops = 0
            loss_sum = 0.0
            seen = 0
            correct = 0
            step_counts: UpdateCounts | None = None
            last_grads: dict = {}

            for images, labels in data_mod.batches(train, plan_batches, epoch):
                logits, tape = net.forward(images, training=True, plan=plan)
                loss, grad_logits = softmax_cross_entropy(logits, labels)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}", epoch=epoch
                    )
                t0 = time.perf_counter()
                grads = net.backward(tape, grad_logits, plan)
                counts = sgd_step(net, grads, plan, opt_state, sgd_cfg, lr)
                backward_seconds += time.perf_counter() - t0
                flops += net.backward_flops(plan, batch_size=len(labels))

                if step_counts is None:
                    step_counts = counts
                elif counts != step_counts:
                    raise ContractError(
                        f"update counts changed mid-epoch: {counts} vs {step_counts}"
                    )
                loss_sum += loss * len(labels)
                seen += len(labels)
                correct += int((logits.argmax(axis=1) == labels).sum())
                last_grads = grads

            train_loss = loss_sum / seen
            train_acc = 100.0 * correct / seen
            val_acc = evaluate(net, val, cfg.batch_size)
            epoch_seconds = time.perf_counter() - epoch_t0

            if cfg.histogram_every and epoch % cfg.histogram_every == 0:
                writer.write_histograms(
                    metrics.snapshot_histogram(net, epoch, cfg.histogram_bins, last_grads)
                )

            lr_changed = epoch > 0 and lr != lr_at_epoch(sgd_cfg, epoch - 1)
            decision = controller.on_validation_end(val_acc, epoch, lr_changed=lr_changed)
            if decision.phase is not phase:
                transitions += 1
            if decision.reason == "initial_epoch":
                initial_epoch = epoch + 1
            writer.append_event(decision.event(epoch, lr))

            assert step_counts is not None
            ledger.append(epoch, phase.value, step_counts.weights, step_counts.biases)
            writer.append_epoch(
                metrics.EpochRecord(
                    epoch=epoch, phase=phase.value,
                    train_loss=train_loss, train_accuracy=train_acc, val_accuracy=val_acc,
                    lr=lr, epoch_wall_seconds=epoch_seconds,
                    backward_wall_seconds=backward_seconds, backward_flops=flops,
                ),
                step_counts.weights, step_counts.biases,
            )
    except TrainingDivergedError:
        writer.finalize({"diverged": True})
        raise

    if cfg.save_snapshot:
        save_snapshot(net, Path(run_dir) / "final.wusm")

    phase_epochs = ledger.epochs_by_phase()
    e_wus = phase_epochs.get("wus", 0)
    e_normal = sum(n for p, n in phase_epochs.items() if p != "wus")
    predicted = metrics.predicted_updates(e_wus, e_normal, w_total, b_active, b_total)
    predicted_literal = metrics.predicted_updates_all_biases(e_wus, e_normal, w_total, b_total)
    rows = metrics.read_epochs_csv(run_dir)
    summary = {
        "variant": cfg.variant,
        "model": cfg.model if isinstance(cfg.model, str) else "inline",
        "dataset": cfg.dataset,
        "seed": seed,
        "epochs": cfg.epochs,
        "depth_k": cfg.depth_k,
        "w": w_total,
        "b_total": b_total,
        "b_active": b_active,
        "epochs_wus": e_wus,
        "epochs_full": e_normal,
        "initial_epoch": initial_epoch,
        "phase_transitions": transitions,
        "weights_updated_total": ledger.total_weights,
        "biases_updated_total": ledger.total_biases,
        "updates_total": ledger.total_updates,
        "predicted_updates": predicted,
        "predicted_updates_all_biases": predicted_literal,
        "ledger_matches_prediction": predicted == ledger.total_updates,
        "total_seconds": sum(float(r["epoch_s"]) for r in rows),
        "backward_seconds": sum(float(r["backward_s"]) for r in rows),
        "backward_flops": sum(int(r["backward_flops"]) for r in rows),
        "final_val_acc": float(rows[-1]["val_acc"]),
        "best_val_acc": max(float(r["val_acc"]) for r in rows),
        "final_train_acc": float(rows[-1]["train_acc"]),
        "final_train_loss": float(rows[-1]["train_loss"]),
    }
    writer.finalize(summary)
    return summary


def run(cfg: ExperimentConfig) -> RunArtifacts:
    """Execute `repeats` seeded runs and write per-run plus aggregate outputs."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    run_dirs = []
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        run_dir = out_dir / f"run_seed{seed}"
        summaries.append(execute_run(cfg, seed, run_dir))
        run_dirs.append(run_dir)
    aggregate = {
        "runs": len(summaries),
        "variant": cfg.variant,
        "mean_total_seconds": float(np.mean([s["total_seconds"] for s in summaries])),
        "mean_backward_seconds": float(np.mean([s["backward_seconds"] for s in summaries])),
        "mean_backward_flops": float(np.mean([s["backward_flops"] for s in summaries])),
        "mean_final_val_acc": float(np.mean([s["final_val_acc"] for s in summaries])),
        "mean_updates_total": float(np.mean([s["updates_total"] for s in summaries])),
        "per_run": summaries,
    }
    with open(out_dir / "aggregate.json", "w") as fh:
        json.dump(aggregate, fh, indent=2)
    return RunArtifacts(out_dir=out_dir, run_dirs=run_dirs, aggregate=aggregate)


@dataclass
class SweepReport:
    rows: list            # one dict per k
    baseline: dict

    def to_csv_rows(self) -> list:
        header = ["k", "time_reduction_pct", "backward_time_reduction_pct",
                  "flops_reduction_pct", "wus_backward_flops_per_sample",
                  "final_val_acc", "acc_delta_pct_points"]
        out = [header]
        for row in self.rows:
            out.append([row[h] for h in header])
        return out


def sweep_layers(cfg: ExperimentConfig, k_values) -> SweepReport:
    """Run a baseline plus one WUS run set per k; report the tradeoff table."""
    cfg.validate()
    k_values = [int(k) for k in k_values]
    train, _ = load_datasets(cfg)
    probe = build_network(model_layers(cfg.model, train.class_count),
                          train.images.shape[1:], init_seed=cfg.seed, dtype=cfg.dtype())
    parametric = len(probe.parametric_indices())
    for k in k_values:
        if not 1 <= k <= parametric:
            raise ConfigError(f"k={k} outside 1..{parametric} parametric layers")

    out_dir = Path(cfg.out_dir)
    base_cfg = replace(cfg, variant="baseline", out_dir=str(out_dir / "baseline"))
    baseline = run(base_cfg).aggregate

    rows = []
    for k in k_values:
        k_cfg = replace(cfg, variant="wus", depth_k=k, out_dir=str(out_dir / f"k{k}"))
        agg = run(k_cfg).aggregate
        plan = GatePlan.wus(probe, k)
        rows.append({
            "k": k,
            "time_reduction_pct": metrics.reduction_percent(
                baseline["mean_total_seconds"], agg["mean_total_seconds"]),
            "backward_time_reduction_pct": metrics.reduction_percent(
                baseline["mean_backward_seconds"], agg["mean_backward_seconds"]),
            "flops_reduction_pct": metrics.reduction_percent(
                baseline["mean_backward_flops"], agg["mean_backward_flops"]),
            "wus_backward_flops_per_sample": probe.backward_flops(plan, batch_size=1),
            "final_val_acc": agg["mean_final_val_acc"],
            "acc_delta_pct_points": agg["mean_final_val_acc"] - baseline["mean_final_val_acc"],
        })
    report = SweepReport(rows=rows, baseline=baseline)
    with open(out_dir / "sweep.csv", "w") as fh:
        for row in report.to_csv_rows():
            fh.write(",".join(str(v) for v in row) + "\n")
    with open(out_dir / "sweep.json", "w") as fh:
        json.dump({"baseline": baseline, "rows": rows}, fh, indent=2)
    return report


@dataclass
class ComparisonReport:
    baseline: dict
    rows: list

    def table(self) -> str:
        header = (f"{'run':<28} {'time_s':>12} {'time_red%':>10} "
                  f"{'final_acc':>10} {'acc_delta':>10} {'upd_red%':>10}")
        lines = [header, "-" * len(header)]
        base = self.baseline
        lines.append(
            f"{base['label']:<28} {base['total_seconds']:>12.2f} {'':>10} "
            f"{base['final_val_acc']:>10.2f} {'':>10} {'':>10}"
        )
        for row in self.rows:
            lines.append(
                f"{row['label']:<28} {row['total_seconds']:>12.2f} "
                f"{row['time_reduction_pct']:>10.2f} {row['final_val_acc']:>10.2f} "
                f"{row['acc_delta_pct_points']:>10.2f} {row['update_reduction_pct']:>10.2f}"
            )
        return "\n".join(lines)


def compare(baseline_dir, *variant_dirs) -> ComparisonReport:
    """Tabulate variant run directories against a baseline run directory."""
    def load(d):
        path = Path(d) / "summary.json"
        if not path.is_file():
            raise ConfigError(f"no summary.json in {d}")
        with open(path) as fh:
            summary = json.load(fh)
        for key in ("total_seconds", "final_val_acc", "updates_total"):
            if key not in summary:
                raise ConfigError(f"summary.json in {d} lacks {key!r}")
        path = Path(d)
        summary["label"] = f"{path.parent.name}/{path.name}" if path.parent.name else path.name
        return summary

    base = load(baseline_dir)
    rows = []
    for d in variant_dirs:
        s = load(d)
        rows.append({
            "label": s["label"],
            "total_seconds": s["total_seconds"],
            "time_reduction_pct": metrics.reduction_percent(
                base["total_seconds"], s["total_seconds"]),
            "final_val_acc": s["final_val_acc"],
            "acc_delta_pct_points": s["final_val_acc"] - base["final_val_acc"],
            "update_reduction_pct": metrics.reduction_percent(
                base["updates_total"], s["updates_total"]),
        })
    base_row = dict(base)
    return ComparisonReport(baseline=base_row, rows=rows)
