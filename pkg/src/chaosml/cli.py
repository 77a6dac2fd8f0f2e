"""Command-line experiment runner.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .attractors import DivergenceError, NonFiniteStateError
from .data import DataError
from .experiments import (
    BENCHMARKS,
    ConfigError,
    compute_tensors,
    emit_split_study,
    load_config,
    load_dataset,
    run_benchmark,
    run_circuit,
    run_optimize,
    run_scan,
)
from .transform import TransformDivergence

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("chaosml")


def _parse_set(items: list[str]) -> dict:
    """``a.b=value`` pairs into a nested dict; values are parsed as YAML scalars."""
    out: dict = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="split / data seed")
    p.add_argument("--mode", choices=["paper", "honest"], help="iteration selection protocol")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted path), repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaosml", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("benchmark", help="run a named benchmark pipeline")
    p.add_argument("name", choices=BENCHMARKS)
    _common(p)

    p = sub.add_parser("scan", help="LLE vs accuracy over a rho grid")
    p.add_argument("name", nargs="?", default="liver", help="benchmark supplying the dataset")
    _common(p)

    p = sub.add_parser("optimize", help="search attractor parameters")
    p.add_argument("name", nargs="?", default="sinc")
    p.add_argument("--budget", type=int)
    p.add_argument("--strategy", choices=["grid", "random", "refine"])
    _common(p)

    p = sub.add_parser("circuit", help="benchmark on the behavioural circuit model")
    p.add_argument("name", nargs="?", default="iris")
    p.add_argument("--r9", type=float, help="R9 in ohms (sets rho)")
    _common(p)

    p = sub.add_parser("split-study", help="mean and std over repeated splits")
    p.add_argument("name", choices=BENCHMARKS)
    p.add_argument("--n-splits", type=int, default=20)
    p.add_argument("--iteration", type=int, help="fixed 1-based iteration (default: seed-0 optimum)")
    _common(p)

    p = sub.add_parser("transform", help="compute and export the trajectory tensor")
    p.add_argument("name", nargs="?", default="sinc")
    p.add_argument("--export", type=Path, required=True, help="tensor binary output path")
    p.add_argument("--slice", type=int, help="also write this 1-based iteration as CSV")
    _common(p)
    return ap


def _config(args, extra: dict | None = None):
    over = _parse_set(args.set)
    if args.seed is not None:
        over["seed"] = args.seed
    if args.mode is not None:
        over["mode"] = args.mode
    if args.out is not None:
        over["out_dir"] = str(args.out)
    if extra:
        from .experiments import _merge

        over = _merge(over, extra)
    return load_config(args.config, args.name, over)


def _finish(report, cfg, args) -> None:
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        path = report.write(out)
        print(f"wrote {path}")
    summary = {"experiment": report.experiment, "metric": report.metric,
               "best_iteration": report.best_iteration, "best_metric": report.best_metric}
    if report.baseline:
        summary["baseline"] = report.baseline
    if report.power:
        summary["power_mw"] = report.power["total_mw"]
    print(json.dumps(summary, indent=1, default=float))


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "benchmark":
            cfg = _config(args)
            _finish(run_benchmark(args.name, cfg), cfg, args)
        elif args.command == "split-study":
            cfg = _config(args)
            _finish(emit_split_study(cfg, args.n_splits, args.iteration), cfg, args)
        elif args.command == "scan":
            cfg = _config(args)
            report, rows = run_scan(cfg)
            if cfg.out_dir:
                from .lyapunov import write_scan_csv

                Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
                write_scan_csv(Path(cfg.out_dir) / "scan.csv", rows)
            _finish(report, cfg, args)
            print(json.dumps(report.extra["stats"], indent=1))
        elif args.command == "optimize":
            extra = {"optimize": {k: v for k, v in (("budget", args.budget), ("strategy", args.strategy)) if v}}
            cfg = _config(args, extra)
            report, res = run_optimize(cfg)
            if cfg.out_dir:
                from .hyperopt import write_log_csv

                Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
                write_log_csv(Path(cfg.out_dir) / "optimize.csv", res)
            _finish(report, cfg, args)
            print(json.dumps(res.best_params, indent=1))
        elif args.command == "circuit":
            extra = {"circuit": {"R9": args.r9}} if args.r9 else {"circuit": {}}
            cfg = _config(args, extra)
            _finish(run_circuit(cfg), cfg, args)
        elif args.command == "transform":
            from .transform import export_slice_csv, save_tensor, slice_iteration

            cfg = _config(args)
            ds = load_dataset(cfg.data, cfg.seed)
            tensors = compute_tensors(cfg, ds)
            args.export.parent.mkdir(parents=True, exist_ok=True)
            for i, t in enumerate(tensors):
                path = args.export if len(tensors) == 1 else args.export.with_suffix(f".{i}{args.export.suffix}")
                save_tensor(path, t, {"config": cfg.to_dict()})
                print(f"wrote {path} dims={list(t.shape)}")
                if args.slice:
                    csv_path = path.with_suffix(f".iter{args.slice}.csv")
                    export_slice_csv(csv_path, slice_iteration(t, args.slice - 1))
                    print(f"wrote {csv_path}")
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, TransformDivergence, NonFiniteStateError, np.linalg.LinAlgError,
            FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
