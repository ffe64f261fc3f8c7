"""Data conditioning: cleaning, frozen-sensor removal, daily alignment,
derived features, partitioning, IQR outlier removal, correlation, scaling and
time-window construction.

The pipeline order is fixed by :func:`condition`::

    clean -> frozen -> derive -> partition -> IQR (fences from trainval)

Scaler fitting and windowing happen later, per training fold, so nothing
computed here depends on validation or test targets.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ConstantFeature, DivisionDomain, EmptyPartition, TooFewSamples
from .welldata import FATAL_FLAG_KINDS, NUMERIC_COLUMNS, SENSOR_COLUMNS, FieldDataset, parse_flags

log = logging.getLogger(__name__)

TARGET = "bhp"

# Named input sets, in column order.
FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "Set1": ("choke_up_p", "choke_up_t", "whp", "wht", "q_oil", "q_gas", "depth_pdg"),
    "Set2": ("choke_up_p", "choke_up_t", "whp", "wht", "q_oil", "q_gas", "q_water", "depth_pdg"),
    "Set3": ("choke_up_p", "choke_up_t", "whp", "wht", "q_oil", "gor", "wcut", "depth_pdg"),
    "Set4": ("choke_aperture", "choke_up_p", "choke_up_t", "whp", "wht", "q_oil", "q_gas", "depth_pdg"),
    "Set5": ("choke_up_p", "whp", "q_oil", "gor", "wcut", "depth_pdg"),
    "Set6": ("choke_up_p", "whp", "q_oil", "q_gas", "wcut", "depth_pdg"),
}
DERIVED_COLUMNS = ("gor", "wcut")
INPUT_CANDIDATES = tuple(c for c in NUMERIC_COLUMNS if c not in ("bhp", "bht", "open_hours")) + DERIVED_COLUMNS
# Columns screened by the IQR rule unless told otherwise.  q_gaslift is on/off
# by nature (a zero-inflated distribution) so it is excepted by default.
IQR_COLUMNS = ("bhp", "whp", "wht", "choke_up_p", "choke_up_t", "choke_aperture", "q_oil", "q_gas",
               "q_water", "q_gaslift", "gor", "wcut", "depth_pdg")
DEFAULT_IQR_EXCEPTIONS = ("q_gaslift",)


@dataclass(frozen=True)
class FeatureSet:
    id: str
    columns: tuple[str, ...]

    def __post_init__(self):
        bad = [c for c in self.columns if c in ("bhp", "bht") or c not in INPUT_CANDIDATES]
        if bad:
            raise ValueError(f"not usable as inputs: {bad}")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate feature names")

    @classmethod
    def named(cls, set_id: str) -> "FeatureSet":
        return cls(set_id, FEATURE_SETS[set_id])

    def extend(self, extra: Sequence[str], set_id: str | None = None) -> "FeatureSet":
        added = tuple(c for c in extra if c not in self.columns)
        return FeatureSet(set_id or f"{self.id}+{'+'.join(added)}", self.columns + added)

    def __len__(self) -> int:
        return len(self.columns)

    def to_dict(self) -> dict:
        return {"id": self.id, "columns": list(self.columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSet":
        return cls(d["id"], tuple(d["columns"]))


# --------------------------------------------------------------------------
# cleaning


def _fatal_flag_mask(frame: pd.DataFrame, required: Sequence[str]) -> np.ndarray:
    req = set(required)
    flags = frame["quality_flags"].to_numpy()
    out = np.zeros(len(frame), dtype=bool)
    for i, text in enumerate(flags):
        if text:
            out[i] = any(k in req and v in FATAL_FLAG_KINDS for k, v in parse_flags(text).items())
    return out


def clean_reasons(frame: pd.DataFrame, required: Sequence[str] = NUMERIC_COLUMNS, min_open_hours: float = 2.0) -> pd.Series:
    """Removal reason per record: ``"null"``, ``"shut_in"``, ``"short_open"`` or ``""``.

    When several rules fire, the first in that order is reported.
    """
    null = _fatal_flag_mask(frame, required) | frame[list(required)].isna().any(axis=1).to_numpy()
    shut = ((frame["q_oil"] <= 0) | (frame["choke_aperture"] <= 0)).to_numpy()
    short = (frame["open_hours"] < min_open_hours).to_numpy()
    reason = np.select([null, shut, short], ["null", "shut_in", "short_open"], default="")
    return pd.Series(reason, index=frame.index)


def clean(ds: FieldDataset, required: Sequence[str] = NUMERIC_COLUMNS, min_open_hours: float = 2.0) -> FieldDataset:
    """Drop records with nulls/errors, zero oil rate or choke, or under two flowing hours.

    ``required`` lists the columns that must be present; pass a list without
    ``"bhp"`` to keep records of wells whose gauge has failed.
    """
    reasons = clean_reasons(ds.frame, required, min_open_hours)
    return ds.replace(ds.frame[reasons.to_numpy() == ""])


def frozen_mask(frame: pd.DataFrame, min_days: int = 3, channels: Sequence[str] = SENSOR_COLUMNS) -> np.ndarray:
    """True for records inside a run of identical values longer than ``min_days``.

    Runs are taken over consecutive records of a well (in date order) and
    compared bitwise.  Frame must be sorted by well and date.
    """
    if min_days < 1:
        raise ValueError("min_days must be >= 1")
    n = len(frame)
    out = np.zeros(n, dtype=bool)
    if n == 0:
        return out
    wells = frame["well_id"].to_numpy()
    well_break = np.r_[True, wells[1:] != wells[:-1]]
    for c in channels:
        v = frame[c].to_numpy()
        same = np.r_[False, v[1:] == v[:-1]] & ~well_break  # NaN never equals
        run_id = np.cumsum(~same)
        lengths = np.bincount(run_id)
        out |= lengths[run_id] > min_days
    return out


def detect_frozen(ds: FieldDataset, min_days: int = 3, channels: Sequence[str] = SENSOR_COLUMNS) -> FieldDataset:
    mask = frozen_mask(ds.frame, min_days, channels)
    return ds.replace(ds.frame[~mask])


def daily_average(hourly: pd.DataFrame, field_id: str = "field", sensor_columns: Sequence[str] = SENSOR_COLUMNS) -> FieldDataset:
    """Collapse hourly rows to one record per (well, calendar day).

    ``hourly`` needs ``well_id``, ``time`` and a boolean ``flowing`` column.
    Sensor channels are averaged over flowing hours only; every other numeric
    column (daily production rates, depth, aperture) is taken from the day's
    first row.  ``open_hours`` becomes the number of flowing hours.
    """
    h = hourly.copy()
    h["date"] = pd.to_datetime(h["time"]).dt.normalize()
    keys = ["well_id", "date"]
    passthrough = [c for c in NUMERIC_COLUMNS if c in h and c not in sensor_columns and c != "open_hours"]
    daily = h.groupby(keys, sort=True)[passthrough].first()
    flowing = h[h["flowing"].astype(bool)]
    sensors = [c for c in sensor_columns if c in h]
    means = flowing.groupby(keys, sort=True)[sensors].mean()
    daily = daily.join(means, how="left")
    daily["open_hours"] = h.groupby(keys, sort=True)["flowing"].sum().astype(float)
    return FieldDataset.from_frame(field_id, daily.reset_index(), provenance="daily_average")


def derive_features(ds: FieldDataset | pd.DataFrame) -> pd.DataFrame:
    """Add gas-oil ratio and water cut columns."""
    frame = ds.frame if isinstance(ds, FieldDataset) else ds
    q_oil = frame["q_oil"].to_numpy()
    if np.any(~(q_oil > 0)):
        raise DivisionDomain("q_oil must be > 0 for every record reaching derive_features")
    out = frame.copy()
    out["gor"] = frame["q_gas"].to_numpy() / q_oil
    out["wcut"] = frame["q_water"].to_numpy() / (q_oil + frame["q_water"].to_numpy())
    return out


# --------------------------------------------------------------------------
# outliers and correlation


def iqr_fences(frame: pd.DataFrame, columns: Sequence[str] = IQR_COLUMNS, exceptions: Iterable[str] = ()) -> dict[str, tuple[float, float]]:
    """``Q1 - 1.5 IQR`` and ``Q3 + 1.5 IQR`` per column, linear-interpolation quantiles."""
    skip = set(exceptions)
    cols = [c for c in columns if c not in skip and c in frame]
    if len(frame) < 4:
        raise TooFewSamples(f"IQR needs at least 4 samples, got {len(frame)}")
    fences = {}
    for c in cols:
        q1, q3 = np.quantile(frame[c].to_numpy(dtype=float), [0.25, 0.75], method="linear")
        iqr = q3 - q1
        fences[c] = (float(q1 - 1.5 * iqr), float(q3 + 1.5 * iqr))
    return fences


def iqr_outlier_mask(frame: pd.DataFrame, fences: dict[str, tuple[float, float]]) -> np.ndarray:
    out = np.zeros(len(frame), dtype=bool)
    for c, (lo, hi) in fences.items():
        v = frame[c].to_numpy(dtype=float)
        out |= (v < lo) | (v > hi)
    return out


def iqr_filter(frame: pd.DataFrame, exceptions: Iterable[str] = DEFAULT_IQR_EXCEPTIONS, columns: Sequence[str] = IQR_COLUMNS,
               fences: dict | None = None) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Split ``frame`` into (kept, removed).

    Fences are computed once from ``frame`` itself unless precomputed ones
    are passed (e.g. from the training partition).
    """
    if fences is None:
        fences = iqr_fences(frame, columns, exceptions)
    else:
        skip = set(exceptions)
        fences = {c: f for c, f in fences.items() if c not in skip}
    mask = iqr_outlier_mask(frame, fences)
    return frame[~mask], frame[mask]


def pearson_matrix(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Pearson correlation between every pair of ``columns``."""
    if len(frame) < 2:
        raise TooFewSamples("need at least 2 samples")
    x = frame[list(columns)].to_numpy(dtype=float)
    d = x - x.mean(axis=0)
    ss = np.sqrt((d * d).sum(axis=0))
    if np.any(ss == 0):
        raise ConstantFeature(f"zero variance: {[c for c, s in zip(columns, ss) if s == 0]}")
    r = (d.T @ d) / np.outer(ss, ss)
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return pd.DataFrame(r, index=list(columns), columns=list(columns))


# --------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalerParams:
    """Affine map ``(x - offset) / scale`` per feature."""

    kind: str  # "minmax" | "standard"
    names: tuple[str, ...]
    offset: np.ndarray
    scale: np.ndarray
    constant: tuple[str, ...] = ()

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.offset

    def subset(self, names: Sequence[str]) -> "ScalerParams":
        idx = [self.names.index(n) for n in names]
        return ScalerParams(self.kind, tuple(names), self.offset[idx], self.scale[idx],
                            tuple(c for c in self.constant if c in names))

    def concat(self, other: "ScalerParams") -> "ScalerParams":
        return ScalerParams(self.kind, self.names + other.names, np.r_[self.offset, other.offset],
                            np.r_[self.scale, other.scale], self.constant + other.constant)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "names": list(self.names), "offset": self.offset.tolist(),
                "scale": self.scale.tolist(), "constant": list(self.constant)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(d["kind"], tuple(d["names"]), np.array(d["offset"], dtype=float), np.array(d["scale"], dtype=float),
                   tuple(d.get("constant", ())))

    def __eq__(self, other):
        return (isinstance(other, ScalerParams) and self.kind == other.kind and self.names == other.names
                and np.array_equal(self.offset, other.offset) and np.array_equal(self.scale, other.scale))

    __hash__ = None


def fit_scaler(x: np.ndarray, kind: str = "minmax", names: Sequence[str] | None = None, allow_constant: bool = False) -> ScalerParams:
    """Fit on training rows only.  ``x`` is (n_samples, n_features) or a 1-D target."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise TooFewSamples("cannot fit a scaler on zero rows")
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(x.shape[1]))
    kind = kind.lower()
    if kind == "minmax":
        offset = x.min(axis=0)
        scale = x.max(axis=0) - offset
    elif kind == "standard":
        offset = x.mean(axis=0)
        scale = x.std(axis=0)
    else:
        raise ValueError(f"unknown scaler kind {kind!r}")
    const = tuple(n for n, s in zip(names, scale) if not s > 0)
    if const:
        if not allow_constant:
            raise ConstantFeature(f"constant on training data: {list(const)}")
        scale = np.where(scale > 0, scale, 1.0)
    return ScalerParams(kind, names, offset, scale, const)


def apply_scaler(params: ScalerParams, x: np.ndarray) -> np.ndarray:
    return params.transform(x)


# --------------------------------------------------------------------------
# windowing


@dataclass(frozen=True)
class WindowedSample:
    x: np.ndarray  # (p + 1, n_features), oldest row first
    y: float
    well_id: str
    timestamp: pd.Timestamp


@dataclass
class WindowedSet:
    """Struct-of-arrays collection of windowed samples."""

    x: np.ndarray  # (N, p + 1, n_features)
    y: np.ndarray  # (N,)
    well_ids: np.ndarray
    dates: np.ndarray
    features: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> WindowedSample:
        return WindowedSample(self.x[i], float(self.y[i]), str(self.well_ids[i]), pd.Timestamp(self.dates[i]))

    @property
    def p(self) -> int:
        return self.x.shape[1] - 1

    def select(self, mask) -> "WindowedSet":
        return WindowedSet(self.x[mask], self.y[mask], self.well_ids[mask], self.dates[mask], self.features)


def window_samples(frame: pd.DataFrame, features: FeatureSet | Sequence[str], p: int, target: str = TARGET) -> WindowedSet:
    """One sample per record with ``p`` predecessors on the previous ``p`` calendar days of the same well."""
    if p < 0:
        raise ValueError("p must be >= 0")
    cols = list(features.columns if isinstance(features, FeatureSet) else features)
    xs, ys, ws, ds = [], [], [], []
    frame = frame.sort_values(["well_id", "date"], kind="mergesort")
    for well, g in frame.groupby("well_id", sort=True):
        n = len(g)
        if n < p + 1:
            continue
        days = g["date"].to_numpy().astype("datetime64[D]").astype(np.int64)
        vals = g[cols].to_numpy(dtype=float)
        ok = np.zeros(n, dtype=bool)
        ok[p:] = days[p:] - days[: n - p] == p  # strictly increasing days => contiguous
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            continue
        windows = np.lib.stride_tricks.sliding_window_view(vals, p + 1, axis=0)  # (n - p, n_feat, p + 1)
        xs.append(np.transpose(windows[idx - p], (0, 2, 1)))
        ys.append(g[target].to_numpy(dtype=float)[idx] if target in g else np.full(len(idx), np.nan))
        ws.append(np.full(len(idx), well, dtype=object))
        ds.append(g["date"].to_numpy()[idx])
    if not xs:
        return WindowedSet(np.zeros((0, p + 1, len(cols))), np.zeros(0), np.zeros(0, dtype=object),
                           np.zeros(0, dtype="datetime64[ns]"), tuple(cols))
    return WindowedSet(np.ascontiguousarray(np.concatenate(xs)), np.concatenate(ys), np.concatenate(ws),
                       np.concatenate(ds), tuple(cols))


# --------------------------------------------------------------------------
# partitioning


@dataclass(frozen=True)
class SplitSpec:
    heldout_wells: frozenset
    temporal_cutoff: pd.Timestamp  # first day of the temporal test set
    k: int = 5

    def __post_init__(self):
        object.__setattr__(self, "heldout_wells", frozenset(self.heldout_wells))
        object.__setattr__(self, "temporal_cutoff", pd.Timestamp(self.temporal_cutoff))

    def to_dict(self) -> dict:
        return {"heldout_wells": sorted(self.heldout_wells), "temporal_cutoff": str(self.temporal_cutoff.date()), "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(frozenset(d["heldout_wells"]), pd.Timestamp(d["temporal_cutoff"]), int(d.get("k", 5)))


def default_split(frame: pd.DataFrame, n_heldout: int, seed: int, test_days: int = 365, k: int = 5) -> SplitSpec:
    """Hold out ``n_heldout`` random wells and the last ``test_days`` days."""
    wells = sorted(frame["well_id"].unique())
    rng = np.random.default_rng(seed)
    held = frozenset(rng.choice(wells, size=min(n_heldout, len(wells)), replace=False).tolist()) if n_heldout else frozenset()
    cutoff = frame["date"].max() - pd.Timedelta(days=test_days - 1)
    return SplitSpec(held, cutoff, k)


def partition(frame: pd.DataFrame, spec: SplitSpec) -> dict[str, pd.DataFrame]:
    """``trainval`` / ``test1`` (held-out wells before cutoff) / ``test2`` (everything from cutoff on)."""
    if len(frame) == 0:
        raise EmptyPartition("no records to partition")
    late = (frame["date"] >= spec.temporal_cutoff).to_numpy()
    held = frame["well_id"].isin(spec.heldout_wells).to_numpy()
    parts = {
        "trainval": frame[~late & ~held],
        "test1": frame[~late & held],
        "test2": frame[late],
    }
    if len(parts["trainval"]) == 0:
        raise EmptyPartition("training/validation partition is empty")
    return parts


# --------------------------------------------------------------------------
# full pipeline


@dataclass
class ConditioningConfig:
    min_frozen_days: int = 3
    min_open_hours: float = 2.0
    n_heldout: int = 9
    heldout_wells: list | None = None
    test_days: int = 365
    split_seed: int = 0
    k: int = 5
    iqr_columns: tuple = IQR_COLUMNS
    iqr_exceptions: tuple = DEFAULT_IQR_EXCEPTIONS
    required: tuple = NUMERIC_COLUMNS

    @classmethod
    def from_dict(cls, d: dict) -> "ConditioningConfig":
        d = dict(d)
        for key in ("iqr_columns", "iqr_exceptions", "required"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class Conditioned:
    """Output of :func:`condition`: derived-record partitions plus bookkeeping."""

    field_id: str
    partitions: dict[str, pd.DataFrame]
    split: SplitSpec
    fences: dict[str, tuple[float, float]]
    report: dict = field(default_factory=dict)

    def to_report_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.report, fh, indent=1, sort_keys=True)


def _keys(frame: pd.DataFrame) -> list[tuple[str, str]]:
    return list(zip(frame["well_id"].tolist(), frame["date"].dt.strftime("%Y-%m-%d").tolist()))


def _per_well(keys) -> dict[str, int]:
    out: dict[str, int] = {}
    for w, _ in keys:
        out[w] = out.get(w, 0) + 1
    return dict(sorted(out.items()))


def condition(ds: FieldDataset, cfg: ConditioningConfig | None = None) -> Conditioned:
    """Run the conditioning steps and record what each rule removed."""
    cfg = cfg or ConditioningConfig()
    frame = ds.frame
    removed: dict[str, list] = {}

    reasons = clean_reasons(frame, cfg.required, cfg.min_open_hours).to_numpy()
    for r in ("null", "shut_in", "short_open"):
        removed[r] = _keys(frame[reasons == r])
    frame = frame[reasons == ""]

    fmask = frozen_mask(frame, cfg.min_frozen_days)
    removed["frozen"] = _keys(frame[fmask])
    frame = frame[~fmask]

    derived = derive_features(frame)
    if cfg.heldout_wells is not None:
        cutoff = derived["date"].max() - pd.Timedelta(days=cfg.test_days - 1) if len(derived) else pd.Timestamp(0)
        split = SplitSpec(frozenset(cfg.heldout_wells), cutoff, cfg.k)
    else:
        if len(derived) == 0:
            raise EmptyPartition("no records survive cleaning")
        split = default_split(derived, cfg.n_heldout, cfg.split_seed, cfg.test_days, cfg.k)
    parts = partition(derived, split)

    # fences come from the training partition only and are applied everywhere
    fences = iqr_fences(parts["trainval"], cfg.iqr_columns, cfg.iqr_exceptions)
    removed["outlier"] = []
    for name in ("trainval", "test1", "test2"):
        mask = iqr_outlier_mask(parts[name], fences)
        removed["outlier"] += _keys(parts[name][mask])
        parts[name] = parts[name][~mask].reset_index(drop=True)

    report = {
        "field_id": ds.field_id,
        "input_records": len(ds),
        "removed_counts": {k: len(v) for k, v in removed.items()},
        "removed_per_well": {k: _per_well(v) for k, v in removed.items()},
        "removed_records": {k: sorted(f"{w}|{d}" for w, d in v) for k, v in removed.items()},
        "partition_counts": {k: len(v) for k, v in parts.items()},
        "split": split.to_dict(),
        "fences": {k: list(v) for k, v in fences.items()},
        "config": cfg.to_dict(),
    }
    log.info("conditioned %s: removed %s, kept %s", ds.field_id, report["removed_counts"], report["partition_counts"])
    return Conditioned(ds.field_id, parts, split, fences, report)
