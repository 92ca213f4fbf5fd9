"""Offline report generation for causalbed results CSVs."""

from .report import (
    PLOTTABLE_METRICS,
    SCHEMA_COLUMNS,
    STRATEGY_PALETTE,
    GroupCurve,
    ReportSpec,
    SchemaError,
    aggregate,
    load_runs,
    render,
)

__all__ = [
    "PLOTTABLE_METRICS",
    "SCHEMA_COLUMNS",
    "STRATEGY_PALETTE",
    "GroupCurve",
    "ReportSpec",
    "SchemaError",
    "aggregate",
    "load_runs",
    "render",
]
