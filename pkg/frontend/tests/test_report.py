import csv
import math
import os
import shutil
import warnings

import numpy as np
import pytest

from causalbed_report import (
    GroupCurve,
    ReportSpec,
    SchemaError,
    aggregate,
    load_runs,
    render,
)
from causalbed_report.report import SCHEMA_COLUMNS, _on_union_axis

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def _spec(tmp_path, **kw):
    base = dict(
        csv_glob=os.path.join(DATA_DIR, "*.csv"),
        metrics=("eshd", "auprc", "avg_ikld"),
        out_dir=str(tmp_path),
    )
    base.update(kw)
    return ReportSpec(**base)


def test_spec_validation(tmp_path):
    _spec(tmp_path)  # valid
    with pytest.raises(ValueError):
        _spec(tmp_path, metrics=())
    with pytest.raises(ValueError):
        _spec(tmp_path, metrics=("eshd", "nope"))
    with pytest.raises(ValueError):
        _spec(tmp_path, ci_level=1.0)
    with pytest.raises(ValueError):
        _spec(tmp_path, ci_level=0.0)
    with pytest.raises(ValueError):
        _spec(tmp_path, out_format="pdf")
    with pytest.raises(ValueError):
        _spec(tmp_path, group_by="nonsense")


def test_load_runs_schema_mismatch_lists_columns(tmp_path):
    src = os.path.join(DATA_DIR, "small_U_CD_s0.csv")
    bad = tmp_path / "bad.csv"
    with open(src) as f:
        rows = list(csv.DictReader(f))
    cols = [c for c in SCHEMA_COLUMNS if c != "auprc"] + ["surprise"]
    with open(bad, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            r["surprise"] = 1
            w.writerow(r)
    with pytest.raises(SchemaError) as exc:
        load_runs(str(tmp_path / "*.csv"))
    assert "auprc" in str(exc.value) and "surprise" in str(exc.value)


def test_load_runs_missing_glob():
    with pytest.raises(FileNotFoundError):
        load_runs("/nonexistent/*.csv")


def _independent_means(paths, metric):
    """Spreadsheet-style recomputation: plain csv module + running sums."""
    sums = {}
    for path in paths:
        with open(path) as f:
            for row in csv.DictReader(f):
                v = float(row[metric])
                if math.isnan(v):
                    continue
                key = (row["strategy"], int(row["t"]))
                s, n = sums.get(key, (0.0, 0))
                sums[key] = (s + v, n + 1)
    return {k: s / n for k, (s, n) in sums.items()}


def test_aggregate_means_match_independent_recomputation():
    df = load_runs(os.path.join(DATA_DIR, "*.csv"))
    paths = sorted(
        os.path.join(DATA_DIR, p) for p in os.listdir(DATA_DIR) if p.endswith(".csv")
    )
    for metric in ("eshd", "auprc", "avg_ikld"):
        oracle = _independent_means(paths, metric)
        for curve in aggregate(df, metric, "strategy", 0.95):
            for t, m in zip(curve.rounds, curve.mean):
                assert abs(m - oracle[(curve.group, int(t))]) < 1e-9


def test_render_three_panel_figure(tmp_path):
    spec = _spec(tmp_path / "out")
    fig_path, table_path = render(spec)
    assert fig_path.endswith("report.png") and os.path.getsize(fig_path) > 0
    text = open(table_path).read()
    for s in ("U_CD", "OBS", "eshd", "auprc", "avg_ikld"):
        assert s in text
    # svg variant too
    spec2 = _spec(tmp_path / "out2", out_format="svg", metrics=("eshd",))
    fig2, _ = render(spec2)
    assert fig2.endswith("report.svg")


def test_render_does_not_mutate_inputs(tmp_path):
    work = tmp_path / "in"
    work.mkdir()
    for p in os.listdir(DATA_DIR):
        shutil.copy(os.path.join(DATA_DIR, p), work)
    before = {p: open(work / p, "rb").read() for p in os.listdir(work)}
    render(_spec(tmp_path / "out", csv_glob=str(work / "*.csv")))
    after = {p: open(work / p, "rb").read() for p in os.listdir(work)}
    assert before == after


def test_single_run_group_warns_and_has_no_band():
    df = load_runs(os.path.join(DATA_DIR, "small_U_CD_s0.csv"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curves = aggregate(df, "eshd", "strategy", 0.95)
    assert len(curves) == 1 and not curves[0].banded
    assert np.isnan(curves[0].lo).all()
    assert any("single run" in str(w.message) for w in caught)


def test_duplicated_rows_give_zero_width_band(tmp_path):
    src = os.path.join(DATA_DIR, "small_U_CD_s0.csv")
    with open(src) as f:
        header = f.readline()
        body = f.read()
    for i in range(3):  # identical runs under distinct run_ids
        with open(tmp_path / f"dup{i}.csv", "w") as f:
            f.write(header)
            f.write(body.replace("small_U_CD_s0", f"dup{i}"))
    df = load_runs(str(tmp_path / "*.csv"))
    (curve,) = aggregate(df, "eshd", "strategy", 0.95)
    assert curve.n_runs == 3 and curve.banded
    np.testing.assert_allclose(curve.hi - curve.lo, 0.0, atol=1e-12)


def test_disjoint_rounds_render_as_breaks(tmp_path):
    src = os.path.join(DATA_DIR, "small_U_CD_s0.csv")
    with open(src) as f:
        rows = list(csv.DictReader(f))
    # strategy A covers even rounds, strategy B odd rounds
    for name, parity in (("A", 0), ("B", 1)):
        with open(tmp_path / f"{name}.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(SCHEMA_COLUMNS))
            w.writeheader()
            for r in rows:
                if int(r["t"]) % 2 == parity:
                    w.writerow({**r, "run_id": name, "strategy": name})
    df = load_runs(str(tmp_path / "*.csv"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curves = aggregate(df, "eshd", "strategy", 0.95)
    union = np.array(sorted({t for c in curves for t in c.rounds}))
    assert len(union) > max(len(c.rounds) for c in curves)
    for curve in curves:
        y = _on_union_axis(curve, union)["mean"]
        assert np.isnan(y).any() and not np.isnan(y).all()


def test_query_kld_all_nan_group_skipped():
    df = load_runs(os.path.join(DATA_DIR, "*.csv"))
    # the small preset logs no query, so query_kld is NaN everywhere
    assert aggregate(df, "query_kld", "strategy", 0.95) == []
