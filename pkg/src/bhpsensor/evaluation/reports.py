"""Evaluation reports: scatter and time-series files, result tables.

Report files are named ``<field>_<dataset>_<model>_<kind>.<ext>`` with kind
one of scatter, series, table.  SVG output is byte-reproducible: the hash
salt and the date metadata are pinned.
"""
from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..errors import IoFailure, LengthMismatch, SoftSensorError  # noqa: E402
from .metrics import METRICS, all_metrics, within_band  # noqa: E402

BANDS = (0.05, 0.10)
SVG_SALT = "bhpsensor"


def report_name(field_id: str, dataset: str, model: str, kind: str) -> str:
    safe = lambda s: "".join(c if c.isalnum() or c in "-+." else "-" for c in str(s))  # noqa: E731
    return f"{safe(field_id)}_{safe(dataset)}_{safe(model)}_{kind}"


@dataclass
class EvalReport:
    mape: float
    smape: float
    rmse: float
    nrmse: float
    n: int
    within_5pct: float
    within_10pct: float
    per_well: dict = field(default_factory=dict)
    run_stats: dict = field(default_factory=dict)  # metric -> {"mean", "std", "runs"}

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, actual, well_ids=None) -> EvalReport:
    """Pooled metrics plus an optional per-well breakdown."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    m = all_metrics(pred, actual)
    per_well = {}
    if well_ids is not None:
        well_ids = np.asarray(well_ids)
        if len(well_ids) != len(pred):
            raise LengthMismatch("well_ids must align with predictions")
        for w in sorted(set(well_ids.tolist())):
            sel = well_ids == w
            per_well[str(w)] = {**all_metrics(pred[sel], actual[sel]), "n": int(sel.sum())}
    return EvalReport(n=len(pred), within_5pct=within_band(pred, actual, 0.05),
                      within_10pct=within_band(pred, actual, 0.10), per_well=per_well, **m)


def run_statistics(reports: Sequence[EvalReport]) -> dict:
    """Mean and population std of each pooled metric over repeated runs."""
    if not reports:
        raise SoftSensorError("no reports to aggregate")
    out = {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports])
        std = 0.0 if np.all(vals == vals[0]) else float(np.std(vals))
        out[m] = {"mean": float(np.mean(vals)), "std": std, "runs": len(vals)}
    return out


# --------------------------------------------------------------------------
# file helpers


def _atomic(path: Path, write) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        write(tmp)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _write_csv(path: Path, header, rows) -> None:
    def write(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    _atomic(path, write)


def _save_svg(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        _atomic(path, lambda tmp: fig.savefig(tmp, format="svg", metadata={"Date": None}))
    plt.close(fig)


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


# --------------------------------------------------------------------------
# scatter


def scatter_report(pred, actual, path, title: str = "") -> EvalReport:
    """Write ``<path>.csv`` (actual, pred) and ``<path>.svg`` with identity and band lines."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.size == 0:
        raise LengthMismatch("nothing to plot")
    report = evaluate(pred, actual)
    stem = Path(path)
    _write_csv(stem.with_name(stem.name + ".csv"), ("actual", "pred"),
               ([_fmt(a), _fmt(p)] for a, p in zip(actual, pred)))
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(actual, pred, s=4, alpha=0.5, color="tab:blue", rasterized=False)
    lo = float(min(actual.min(), pred.min()))
    hi = float(max(actual.max(), pred.max()))
    xs = np.array([lo, hi])
    ax.plot(xs, xs, color="black", lw=1, label="identity")
    ax.plot(xs, xs * 1.10, "k--", lw=0.8, label="+/-10%")
    ax.plot(xs, xs * 0.90, "k--", lw=0.8)
    ax.plot(xs, xs * 1.05, "k-.", lw=0.8, label="+/-5%")
    ax.plot(xs, xs * 0.95, "k-.", lw=0.8)
    ax.set_xlabel("measured BHP (kgf/cm2)")
    ax.set_ylabel("estimated BHP (kgf/cm2)")
    ax.set_title(f"{title} MAPE {report.mape:.3f}%".strip())
    ax.legend(loc="upper left")
    fig.tight_layout()
    _save_svg(fig, stem.with_name(stem.name + ".svg"))
    return report


# --------------------------------------------------------------------------
# time series


def timeseries_report(dates, actual, predictions: Mapping[str, np.ndarray], path, title: str = "") -> pd.DataFrame:
    """One well: CSV ``date, actual, <model>...`` and a line chart.

    Only days present in the input appear in the CSV; in the chart, missing
    days break the lines instead of being bridged.
    """
    dates = pd.to_datetime(pd.Series(dates)).to_numpy()
    actual = np.asarray(actual, dtype=float)
    if len(dates) != len(actual) or any(len(v) != len(actual) for v in predictions.values()):
        raise LengthMismatch("dates, actual and predictions must align")
    if len(dates) and len(np.unique(dates)) != len(dates):
        raise SoftSensorError("duplicate timestamps in series")
    order = np.argsort(dates, kind="mergesort")
    frame = pd.DataFrame({"date": dates[order], "actual": actual[order]})
    for name in predictions:
        frame[name] = np.asarray(predictions[name], dtype=float)[order]
    stem = Path(path)
    _write_csv(stem.with_name(stem.name + ".csv"), list(frame.columns),
               ([pd.Timestamp(r[0]).strftime("%Y-%m-%d")] + [_fmt(v) for v in r[1:]] for r in frame.itertuples(index=False)))
    # a NaN row after every gap makes matplotlib lift the pen
    days = frame["date"].to_numpy().astype("datetime64[D]")
    plot = frame.set_index("date")
    if len(days) > 1:
        gaps = np.flatnonzero(np.diff(days).astype(int) > 1)
        if len(gaps):
            breaks = pd.DataFrame(np.nan, index=pd.DatetimeIndex(days[gaps] + np.timedelta64(1, "D")),
                                  columns=plot.columns)
            plot = pd.concat([plot, breaks]).sort_index(kind="mergesort")
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(plot.index, plot["actual"], color="black", lw=1, label="measured")
    for name in predictions:
        ax.plot(plot.index, plot[name], lw=0.9, label=name)
    ax.set_ylabel("BHP (kgf/cm2)")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.autofmt_xdate()
    fig.tight_layout()
    _save_svg(fig, stem.with_name(stem.name + ".svg"))
    return frame


# --------------------------------------------------------------------------
# tables

TABLE_METRICS = (("MAPE", "mape"), ("SMAPE", "smape"), ("nRMSE", "nrmse"))


@dataclass
class TableRow:
    model: str
    values: dict  # metric -> list of per-run values

    @property
    def runs(self) -> int:
        return len(next(iter(self.values.values())))

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values[metric]))

    def std(self, metric: str) -> float:
        v = np.asarray(self.values[metric], dtype=float)
        return 0.0 if np.all(v == v[0]) else float(np.std(v))


def as_row(model: str, result) -> TableRow:
    """Table row from a CvResult, an EvalReport, a list of EvalReports or a metric->values dict."""
    if hasattr(result, "run_means"):
        return TableRow(model, {m: result.run_means(m) for _, m in TABLE_METRICS})
    if isinstance(result, EvalReport):
        return TableRow(model, {m: [getattr(result, m)] for _, m in TABLE_METRICS})
    if isinstance(result, (list, tuple)) and result and isinstance(result[0], EvalReport):
        return TableRow(model, {m: [getattr(r, m) for r in result] for _, m in TABLE_METRICS})
    if isinstance(result, Mapping):
        return TableRow(model, {m: list(np.atleast_1d(result[m])) for _, m in TABLE_METRICS})
    raise TypeError(f"cannot tabulate {type(result).__name__}")


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.3f} ±0.0" if std == 0 else f"{mean:.3f} ±{std:.3f}"


def result_table(rows: Sequence[TableRow], path, title: str = "", n_samples: int | None = None,
                 sort: bool = True) -> list[list[str]]:
    """CSV with ``Model, MAPE, SMAPE, nRMSE`` cells as ``"mean ±std"``.

    A leading ``#`` line carries the title and sample count.  Rows from a
    single run have std 0 by convention and are flagged with ``(1 run)``.
    """
    if not rows:
        raise SoftSensorError("empty result table")
    rows = sorted(rows, key=lambda r: (r.mean("mape"), r.model)) if sort else list(rows)
    body = []
    for r in rows:
        name = r.model + (" (1 run)" if r.runs == 1 else "")
        body.append([name] + [format_cell(r.mean(m), r.std(m)) for _, m in TABLE_METRICS])
    head = title
    if n_samples is not None:
        head = f"{title} ({n_samples:,} samples)".strip()
    path = Path(path)

    def write(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            if head:
                fh.write(f"# {head}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["Model"] + [label for label, _ in TABLE_METRICS])
            w.writerows(body)

    _atomic(path, write)
    return body
