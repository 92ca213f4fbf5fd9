"""Figure and table generation from harness results CSVs.

Consumes only the documented results schema (one CSV per run, one row per
experiment round) and renders per-metric curves of the across-run mean with
Student-t confidence bands, grouped by strategy, plus a final-round summary
table.
"""

from __future__ import annotations

import glob as globlib
import warnings
from dataclasses import dataclass, field

import matplotlib
import numpy as np
import pandas as pd
from scipy.stats import t as student_t

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

#: Results schema written by the harness, in column order.
SCHEMA_COLUMNS = (
    "run_id",
    "strategy",
    "t",
    "intervention_target",
    "intervention_value",
    "eshd",
    "auprc",
    "avg_ikld",
    "query_kld",
    "utility_of_chosen",
    "wall_seconds",
    "cache_hits",
    "svgd_iters",
    "cyclic_rejections",
)

PLOTTABLE_METRICS = ("eshd", "auprc", "avg_ikld", "query_kld")

#: Fixed palette and legend order so figures are comparable across reports.
STRATEGY_PALETTE = {
    "OBS": "#7f7f7f",
    "RAND": "#bcbd22",
    "RAND_FIXED": "#8c564b",
    "U_CD": "#1f77b4",
    "U_CML": "#2ca02c",
    "U_CR": "#d62728",
}
_FALLBACK_COLORS = ("#9467bd", "#e377c2", "#17becf", "#ff7f0e")

METRIC_LABELS = {
    "eshd": "expected SHD",
    "auprc": "AUPRC",
    "avg_ikld": "average interventional KLD",
    "query_kld": "query KLD",
}


class SchemaError(ValueError):
    """A CSV does not match the harness results schema."""


@dataclass(frozen=True)
class ReportSpec:
    """What to plot and where to put it."""

    csv_glob: str
    metrics: tuple[str, ...] = PLOTTABLE_METRICS
    group_by: str = "strategy"
    out_format: str = "png"  # png | svg
    out_dir: str = "report"
    ci_level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if len(self.metrics) < 1:
            raise ValueError("at least one metric is required")
        bad = [m for m in self.metrics if m not in PLOTTABLE_METRICS]
        if bad:
            raise ValueError(f"unknown metrics {bad}; choose from {PLOTTABLE_METRICS}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie strictly between 0 and 1")
        if self.out_format not in ("png", "svg"):
            raise ValueError("out_format must be 'png' or 'svg'")
        if self.group_by not in SCHEMA_COLUMNS:
            raise ValueError(f"unknown group-by column {self.group_by!r}")


def load_runs(csv_glob: str) -> pd.DataFrame:
    """Read all matching CSVs into one frame, validating the schema.

    Raises SchemaError naming the offending columns of the first bad file.
    """
    paths = sorted(globlib.glob(csv_glob))
    if not paths:
        raise FileNotFoundError(f"no CSV files match {csv_glob!r}")
    frames = []
    for path in paths:
        df = pd.read_csv(path)
        missing = [c for c in SCHEMA_COLUMNS if c not in df.columns]
        extra = [c for c in df.columns if c not in SCHEMA_COLUMNS]
        if missing or extra:
            raise SchemaError(
                f"{path}: missing columns {missing}, unexpected columns {extra}"
            )
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


@dataclass
class GroupCurve:
    """Aggregated curve for one (group value, metric) pair."""

    group: str
    rounds: np.ndarray  # sorted union of rounds with >= 1 value
    mean: np.ndarray
    lo: np.ndarray  # NaN where the band is undefined (single run)
    hi: np.ndarray
    n_runs: int
    banded: bool = field(default=True)


def aggregate(
    df: pd.DataFrame, metric: str, group_by: str, ci_level: float
) -> list[GroupCurve]:
    """Mean and Student-t CI of metric per round, for each group value.

    Groups observed in a single run get mean curves without bands (the
    t-interval is undefined at n=1); a warning is emitted for each.
    """
    curves = []
    for group, sub in df.groupby(group_by, sort=True):
        vals = sub.dropna(subset=[metric])
        if vals.empty:
            continue
        n_runs = vals["run_id"].nunique()
        per_round = vals.groupby("t")[metric]
        rounds = np.array(sorted(per_round.groups))
        mean = per_round.mean().loc[rounds].to_numpy()
        if n_runs > 1:
            sd = per_round.std(ddof=1).loc[rounds].to_numpy()
            cnt = per_round.count().loc[rounds].to_numpy()
            half = np.full(len(rounds), np.nan)
            ok = cnt > 1
            q = student_t.ppf(0.5 + ci_level / 2.0, cnt[ok] - 1)
            half[ok] = q * sd[ok] / np.sqrt(cnt[ok])
            lo, hi = mean - half, mean + half
            banded = True
        else:
            warnings.warn(
                f"group {group!r} has a single run for metric {metric!r}; "
                "plotting the curve without a confidence band",
                stacklevel=2,
            )
            lo = hi = np.full(len(rounds), np.nan)
            banded = False
        curves.append(GroupCurve(str(group), rounds, mean, lo, hi, n_runs, banded))
    return curves


def _color(group: str, index: int) -> str:
    return STRATEGY_PALETTE.get(group, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


def _on_union_axis(curve: GroupCurve, union: np.ndarray):
    """Reindex onto the union of rounds; missing rounds become NaN breaks."""
    out = {}
    for name in ("mean", "lo", "hi"):
        y = np.full(len(union), np.nan)
        y[np.searchsorted(union, curve.rounds)] = getattr(curve, name)
        out[name] = y
    return out


def render(spec: ReportSpec) -> list[str]:
    """Render one figure (a panel per metric) plus a summary table.

    Returns the written file paths: [figure, table]. Input CSVs are only
    ever read.
    """
    import os

    df = load_runs(spec.csv_glob)
    os.makedirs(spec.out_dir, exist_ok=True)

    n = len(spec.metrics)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False)
    table_rows = []
    for ax, metric in zip(axes[0], spec.metrics):
        curves = aggregate(df, metric, spec.group_by, spec.ci_level)
        union = np.array(sorted({t for c in curves for t in c.rounds}))
        for i, curve in enumerate(curves):
            color = _color(curve.group, i)
            y = _on_union_axis(curve, union)
            ax.plot(union, y["mean"], label=curve.group, color=color)
            if curve.banded:
                band_ok = ~np.isnan(y["lo"])
                ax.fill_between(
                    union, y["lo"], y["hi"], where=band_ok, color=color, alpha=0.2
                )
            final_t = curve.rounds[-1]
            half = curve.hi[-1] - curve.mean[-1]
            table_rows.append(
                {
                    "metric": metric,
                    spec.group_by: curve.group,
                    "final_round": int(final_t),
                    "n_runs": curve.n_runs,
                    "mean": curve.mean[-1],
                    "ci_half_width": half,
                }
            )
        ax.set_xlabel("experiment round t")
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig_path = os.path.join(spec.out_dir, f"report.{spec.out_format}")
    fig.savefig(fig_path, dpi=150)
    plt.close(fig)

    table = pd.DataFrame(table_rows)
    table_path = os.path.join(spec.out_dir, "summary.txt")
    with open(table_path, "w") as f:
        f.write(f"final-round means with {spec.ci_level:.0%} Student-t CI\n\n")
        f.write(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        f.write("\n")
    return [fig_path, table_path]
