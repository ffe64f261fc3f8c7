import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhpsensor.errors import DomainError, LengthMismatch, SoftSensorError
from bhpsensor.evaluation import (
    EvalReport,
    TableRow,
    as_row,
    evaluate,
    format_cell,
    mape,
    nrmse,
    report_name,
    result_table,
    rmse,
    run_statistics,
    scatter_report,
    smape,
    timeseries_report,
    within_band,
)


def loop_metrics(pred, actual):
    """Second implementation: explicit elementwise loops in plain Python."""
    n = len(pred)
    ape = sape = se = tot = 0.0
    for p, a in zip(pred, actual):
        ape += abs(p - a) / abs(a)
        sape += abs(p - a) / ((abs(p) + abs(a)) / 2.0)
        se += (p - a) ** 2
        tot += a
    r = math.sqrt(se / n)
    return {"mape": 100.0 * ape / n, "smape": 100.0 * sape / n, "rmse": r, "nrmse": 100.0 * r / (tot / n)}


def test_single_pair_fixture():
    p, a = [110.0], [100.0]
    assert mape(p, a) == pytest.approx(10.0, abs=1e-12)
    assert smape(p, a) == pytest.approx(100 * 10 / 105, abs=1e-12)
    assert round(smape(p, a), 3) == 9.524
    assert rmse(p, a) == 10.0
    assert nrmse(p, a) == pytest.approx(10.0, abs=1e-12)


def test_perfect_prediction():
    a = np.array([300.0, 420.5, 512.0])
    r = evaluate(a, a)
    assert (r.mape, r.smape, r.rmse, r.nrmse) == (0.0, 0.0, 0.0, 0.0)
    assert r.within_5pct == 1.0 and r.within_10pct == 1.0


def test_metrics_match_loop_oracle(rng):
    actual = rng.uniform(200.0, 600.0, size=10_000)
    pred = actual * (1 + rng.normal(0, 0.03, size=10_000))
    fast = evaluate(pred, actual)
    slow = loop_metrics(pred.tolist(), actual.tolist())
    for k, v in slow.items():
        assert getattr(fast, k) == pytest.approx(v, abs=1e-10), k


def test_domain_and_length_errors():
    with pytest.raises(DomainError):
        mape([1.0], [0.0])
    with pytest.raises(DomainError):
        smape([0.0], [0.0])
    with pytest.raises(LengthMismatch):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(LengthMismatch):
        mape([], [])


pos = st.floats(1e-3, 1e6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(pos, pos), min_size=1, max_size=50))
def test_smape_symmetric(pairs):
    p = [x for x, _ in pairs]
    a = [y for _, y in pairs]
    assert smape(p, a) == pytest.approx(smape(a, p), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(pos, pos), min_size=1, max_size=50), st.floats(1e-3, 1e3))
def test_scale_invariance(pairs, c):
    p = np.array([x for x, _ in pairs])
    a = np.array([y for _, y in pairs])
    for f in (mape, smape, nrmse):
        assert f(p * c, a * c) == pytest.approx(f(p, a), rel=1e-9, abs=1e-9)
    assert rmse(p * c, a * c) == pytest.approx(c * rmse(p, a), rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(pos, pos), min_size=1, max_size=50))
def test_band_ordering_and_nonnegative(pairs):
    p = [x for x, _ in pairs]
    a = [y for _, y in pairs]
    r = evaluate(p, a)
    assert 0.0 <= r.within_5pct <= r.within_10pct <= 1.0
    assert min(r.mape, r.smape, r.rmse, r.nrmse) >= 0.0


def test_constant_relative_error_bands():
    a = np.linspace(200.0, 600.0, 50)
    assert within_band(1.07 * a, a, 0.05) == 0.0
    assert within_band(1.07 * a, a, 0.10) == 1.0


def test_bands_match_brute_count(rng):
    a = rng.uniform(100.0, 500.0, size=2000)
    p = a * (1 + rng.normal(0, 0.06, size=2000))
    for band in (0.05, 0.10):
        count = sum(1 for x, y in zip(p, a) if abs(x - y) / y <= band)
        assert within_band(p, a, band) == count / 2000


def test_per_well_breakdown():
    r = evaluate([110.0, 100.0, 95.0], [100.0, 100.0, 100.0], ["B", "A", "B"])
    assert set(r.per_well) == {"A", "B"}
    assert r.per_well["A"]["mape"] == 0.0
    assert r.per_well["B"]["n"] == 2
    assert r.per_well["B"]["mape"] == pytest.approx(7.5)
    with pytest.raises(LengthMismatch):
        evaluate([1.0], [1.0], ["A", "B"])


def test_run_statistics():
    reps = [evaluate([110.0], [100.0]), evaluate([110.0], [100.0])]
    s = run_statistics(reps)
    assert s["mape"]["std"] == 0.0 and s["mape"]["runs"] == 2
    s = run_statistics([evaluate([110.0], [100.0]), evaluate([120.0], [100.0])])
    assert s["mape"]["mean"] == pytest.approx(15.0) and s["mape"]["std"] == pytest.approx(5.0)
    with pytest.raises(SoftSensorError):
        run_statistics([])


# --------------------------------------------------------------------------
# report files


def test_report_name():
    assert report_name("field1", "test1", "LSTM1", "scatter") == "field1_test1_LSTM1_scatter"
    assert report_name("f", "d", "NN1 w/o TL", "table") == "f_d_NN1-w-o-TL_table"


def test_scatter_report_files(tmp_path, rng):
    a = rng.uniform(300.0, 500.0, size=40)
    p = a * 1.01
    stem = tmp_path / report_name("field1", "test1", "LR1", "scatter")
    rep = scatter_report(p, a, stem, title="LR1")
    csv = pd.read_csv(stem.with_suffix(".csv"), float_precision="round_trip")
    assert list(csv.columns) == ["actual", "pred"]
    np.testing.assert_array_equal(csv["actual"].to_numpy(), a)
    np.testing.assert_array_equal(csv["pred"].to_numpy(), p)
    svg = stem.with_suffix(".svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg
    assert rep.within_5pct == 1.0 and rep.n == 40


def test_scatter_svg_reproducible(tmp_path, rng):
    a = rng.uniform(300.0, 500.0, size=30)
    scatter_report(a * 0.98, a, tmp_path / "one")
    scatter_report(a * 0.98, a, tmp_path / "two")
    assert (tmp_path / "one.svg").read_bytes() == (tmp_path / "two.svg").read_bytes()


def test_scatter_empty():
    with pytest.raises(LengthMismatch):
        scatter_report([], [], "/tmp/never")


def test_series_one_model(tmp_path):
    dates = pd.date_range("2020-01-01", periods=5)
    frame = timeseries_report(dates, [1.0, 2.0, 3.0, 4.0, 5.0], {"LSTM1": np.arange(5.0)}, tmp_path / "s")
    csv = pd.read_csv(tmp_path / "s.csv")
    assert list(csv.columns) == ["date", "actual", "LSTM1"]
    assert len(csv) == 5 and len(frame) == 5


def test_series_gap_has_no_row(tmp_path):
    dates = pd.to_datetime(["2020-01-01", "2020-01-02", "2020-01-04", "2020-01-05"])
    timeseries_report(dates, [1.0, 2.0, 3.0, 4.0], {"m": [1.0, 2.0, 3.0, 4.0]}, tmp_path / "g")
    csv = pd.read_csv(tmp_path / "g.csv")
    assert csv["date"].tolist() == ["2020-01-01", "2020-01-02", "2020-01-04", "2020-01-05"]
    assert csv.notna().all().all()


def test_series_three_models(tmp_path):
    dates = pd.date_range("2020-01-01", periods=3)
    preds = {"LR1": [1.0, 1.0, 1.0], "NN1": [2.0, 2.0, 2.0], "LSTM1": [3.0, 3.0, 3.0]}
    timeseries_report(dates[::-1], [3.0, 2.0, 1.0], preds, tmp_path / "m")
    csv = pd.read_csv(tmp_path / "m.csv")
    assert list(csv.columns) == ["date", "actual", "LR1", "NN1", "LSTM1"]
    assert csv["actual"].tolist() == [1.0, 2.0, 3.0]


def test_series_misaligned(tmp_path):
    with pytest.raises(LengthMismatch):
        timeseries_report(pd.date_range("2020-01-01", periods=3), [1.0, 2.0, 3.0], {"m": [1.0]}, tmp_path / "x")


# --------------------------------------------------------------------------
# tables


def test_format_cell():
    assert format_cell(1.244, 0.0) == "1.244 ±0.0"
    assert format_cell(1.5, 0.0123) == "1.500 ±0.012"


def test_result_table_sorted_and_flagged(tmp_path):
    rows = [
        as_row("NN1", {"mape": [1.2, 1.4], "smape": [1.2, 1.4], "nrmse": [1.5, 1.7]}),
        as_row("LR1", {"mape": [1.244, 1.244], "smape": [1.25, 1.25], "nrmse": [1.6, 1.6]}),
        as_row("LSTM1", EvalReport(1.05, 1.04, 5.0, 1.3, 100, 0.99, 1.0)),
    ]
    path = tmp_path / "f_test1_all_table.csv"
    body = result_table(rows, path, "Test Set 1", n_samples=9410)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# Test Set 1 (9,410 samples)"
    assert lines[1] == "Model,MAPE,SMAPE,nRMSE"
    assert [b[0] for b in body] == ["LSTM1 (1 run)", "LR1", "NN1"]
    assert lines[3] == "LR1,1.244 ±0.0,1.250 ±0.0,1.600 ±0.0"
    assert lines[2].startswith("LSTM1 (1 run),1.050 ±0.0")
    assert lines[4].startswith("NN1,1.300 ±0.100")


def test_result_table_unsorted_and_empty(tmp_path):
    rows = [TableRow("B", {"mape": [2.0], "smape": [2.0], "nrmse": [2.0]}),
            TableRow("A", {"mape": [1.0], "smape": [1.0], "nrmse": [1.0]})]
    body = result_table(rows, tmp_path / "t.csv", sort=False)
    assert [b[0] for b in body] == ["B (1 run)", "A (1 run)"]
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "Model,MAPE,SMAPE,nRMSE"
    with pytest.raises(SoftSensorError):
        result_table([], tmp_path / "e.csv")


def test_as_row_rejects_unknown():
    with pytest.raises(TypeError):
        as_row("x", 3.0)
