"""Command-line experiment driver.

  wustrain run --config exp.json [--seed N] [--variant baseline|wus|wus-lr] [--out DIR]
  wustrain sweep --config exp.json --k 1,2,3 [--out DIR]
  wustrain compare BASELINE_DIR VARIANT_DIR [VARIANT_DIR ...]

Exit codes: 0 success, 2 configuration error, 3 dataset ingestion error,
4 numerical divergence (with the failing epoch in the message).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, DataFormatError, TrainingDivergedError
from .runner import ExperimentConfig, compare, run, sweep_layers


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wustrain",
        description="Train networks with weight-update skipping and compare variants.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("--config", required=True, help="JSON experiment config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--variant", default=None,
                       choices=["baseline", "wus", "wus-lr"], help="override the variant")
    p_run.add_argument("--out", default=None, help="override the output directory")

    p_sweep = sub.add_parser("sweep", help="sweep the number of gated layers k")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--k", required=True, help="comma-separated k values, e.g. 1,2,3")
    p_sweep.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare", help="tabulate run directories against a baseline")
    p_cmp.add_argument("dirs", nargs="+", metavar="DIR",
                       help="baseline directory followed by variant directories")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        overrides["variant"] = args.variant
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = replace(cfg, **overrides).validate()
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            artifacts = run(_load_config(args))
            agg = artifacts.aggregate
            print(f"completed {agg['runs']} run(s) -> {artifacts.out_dir}")
            print(f"mean final val accuracy: {agg['mean_final_val_acc']:.2f}%")
            print(f"mean training time: {agg['mean_total_seconds']:.2f}s")
        elif args.command == "sweep":
            cfg = _load_config(args)
            k_values = [int(v) for v in args.k.split(",") if v.strip()]
            if not k_values:
                raise ConfigError("--k needs at least one value")
            report = sweep_layers(cfg, k_values)
            print(f"{'k':>3} {'time_red%':>10} {'bwd_red%':>10} {'flops_red%':>11} "
                  f"{'final_acc':>10}")
            for row in report.rows:
                print(f"{row['k']:>3} {row['time_reduction_pct']:>10.2f} "
                      f"{row['backward_time_reduction_pct']:>10.2f} "
                      f"{row['flops_reduction_pct']:>11.2f} {row['final_val_acc']:>10.2f}")
        else:
            if len(args.dirs) < 2:
                raise ConfigError("compare needs a baseline directory and at least one variant")
            report = compare(args.dirs[0], *args.dirs[1:])
            print(report.table())
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
