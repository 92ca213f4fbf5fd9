"""Command-line entry points: run, sweep, report, presets."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import harness
from .gp import GpNumericsError
from .harness import ConfigError, RunConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _base_config(args) -> RunConfig:
    if args.config:
        cfg = harness.load_config(args.config)
        if args.preset:
            raise ConfigError("pass either --config or --preset, not both")
        return cfg
    if args.preset:
        return harness.preset(args.preset)
    raise ConfigError("one of --config or --preset is required")


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s]


def cmd_run(args) -> int:
    cfg = _base_config(args)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.run_id is not None:
        overrides["run_id"] = args.run_id
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    rows = harness.run(cfg, resume_from=args.resume)
    print(f"{cfg.run_id}: {len(rows)} rows written to {cfg.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _base_config(args)
    if args.out_dir is not None:
        base = dataclasses.replace(base, out_dir=args.out_dir)
    seeds = _parse_seeds(args.seeds)
    strategies = args.strategies.split(",")
    for s in strategies:
        if s not in harness.STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    results = harness.sweep(base, seeds, strategies, n_workers=args.workers)
    print(f"completed {len(results)} runs in {base.out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        from causalbed_report import ReportSpec, render
    except ImportError:
        print(
            "the report component is not installed; install the causalbed-report package",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    spec = ReportSpec(
        csv_glob=f"{args.csv_dir}/*.csv",
        metrics=tuple(args.metrics.split(",")),
        out_dir=args.out,
    )
    paths = render(spec)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_presets(_args) -> int:
    for name in harness.preset_names():
        cfg = harness.preset(name)
        print(
            f"{name}: graph={cfg.graph_kind} d={cfg.d} T={cfg.n_rounds} "
            f"N_t={cfg.batch_size} init_obs={cfg.n_init_obs}"
            + (" query" if cfg.query_enabled else "")
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalbed",
        description="Active Bayesian causal inference over nonlinear additive-noise models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single run")
    p_run.add_argument("--config", help="INI config file")
    p_run.add_argument("--preset", help="named preset configuration")
    p_run.add_argument("--resume", help="state file to resume from")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--strategy", choices=harness.STRATEGIES)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--run-id")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a seeds x strategies grid")
    p_sweep.add_argument("--config")
    p_sweep.add_argument("--preset")
    p_sweep.add_argument("--seeds", required=True, help="e.g. 0..19 or 0,3,7")
    p_sweep.add_argument("--strategies", required=True, help="comma-separated")
    p_sweep.add_argument("--out-dir")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_report = sub.add_parser("report", help="render figures from results CSVs")
    p_report.add_argument("--csv-dir", required=True)
    p_report.add_argument("--out", default="report")
    p_report.add_argument("--metrics", default="eshd,auprc,avg_ikld,query_kld")
    p_report.set_defaults(fn=cmd_report)

    p_presets = sub.add_parser("presets", help="list shipped presets")
    p_presets.set_defaults(fn=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GpNumericsError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
