"""Standalone CLI for report generation (also reachable via `causalbed report`)."""

import argparse
import sys

from .report import PLOTTABLE_METRICS, ReportSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="causalbed-report", description="render figures from results CSVs"
    )
    parser.add_argument("--csv-dir", required=True, help="directory of results CSVs")
    parser.add_argument("--out", default="report", help="output directory")
    parser.add_argument(
        "--metrics",
        default=",".join(PLOTTABLE_METRICS),
        help="comma-separated subset of " + ",".join(PLOTTABLE_METRICS),
    )
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    parser.add_argument("--ci-level", type=float, default=0.95)
    args = parser.parse_args(argv)
    try:
        spec = ReportSpec(
            csv_glob=f"{args.csv_dir}/*.csv",
            metrics=tuple(m for m in args.metrics.split(",") if m),
            out_format=args.format,
            out_dir=args.out,
            ci_level=args.ci_level,
        )
        paths = render(spec)
    except (ValueError, FileNotFoundError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
