"""Well telemetry containers and CSV persistence.

One CSV file holds one field: one row per (well, day), nulls as empty cells,
floats written with ``repr`` so a save/load cycle is exact.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import pandas as pd

from .errors import DuplicateTimestamp, EmptyFile, InconsistentDepth, IoFailure, MissingColumn, SoftSensorError

log = logging.getLogger(__name__)

# Measured channels plus bookkeeping, in file order.
NUMERIC_COLUMNS = (
    "bhp",
    "bht",
    "whp",
    "wht",
    "choke_up_p",
    "choke_up_t",
    "choke_aperture",
    "q_oil",
    "q_gas",
    "q_water",
    "q_gaslift",
    "depth_pdg",
    "open_hours",
)
COLUMNS = ("well_id", "date") + NUMERIC_COLUMNS + ("quality_flags",)

RATE_COLUMNS = ("q_oil", "q_gas", "q_water", "q_gaslift")
# Gauge channels that can freeze; rates come from allocation and legitimately repeat.
SENSOR_COLUMNS = ("bhp", "bht", "whp", "wht", "choke_up_p", "choke_up_t")
# The target is optional: a failed PDG leaves it empty.
OPTIONAL_COLUMNS = ("bhp", "bht")

# Flag kinds: "null" and "error" make a record unusable, "warn" is informational.
FATAL_FLAG_KINDS = ("null", "error")


@dataclass(frozen=True)
class WellRecord:
    """One daily sample of one well. Absent values are ``None``."""

    well_id: str
    timestamp: dt.date
    bhp: float | None
    bht: float | None
    whp: float | None
    wht: float | None
    choke_up_p: float | None
    choke_up_t: float | None
    choke_aperture: float | None
    q_oil: float | None
    q_gas: float | None
    q_water: float | None
    q_gaslift: float | None
    depth_pdg: float | None
    open_hours: float | None
    quality_flags: tuple[str, ...] = ()


def parse_flags(text: str) -> dict[str, str]:
    """``"bhp:null;whp:error"`` -> ``{"bhp": "null", "whp": "error"}``."""
    out: dict[str, str] = {}
    for item in filter(None, (text or "").split(";")):
        name, _, kind = item.partition(":")
        out[name] = kind
    return out


def format_flags(flags: Mapping[str, str]) -> str:
    return ";".join(f"{k}:{flags[k]}" for k in sorted(flags))


@dataclass(frozen=True)
class FieldDataset:
    """All wells of one field as a single long-format frame.

    The frame is sorted by ``(well_id, date)`` with a fresh RangeIndex and is
    treated as immutable; transformations return new datasets.
    """

    field_id: str
    frame: pd.DataFrame
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_frame(cls, field_id: str, frame: pd.DataFrame, provenance: str = "", meta=None) -> "FieldDataset":
        return cls(field_id, normalize_frame(frame), provenance, dict(meta or {}))

    def replace(self, frame: pd.DataFrame) -> "FieldDataset":
        return FieldDataset(self.field_id, normalize_frame(frame), self.provenance, dict(self.meta))

    @property
    def well_ids(self) -> list[str]:
        return sorted(self.frame["well_id"].unique().tolist())

    @property
    def wells(self) -> dict[str, pd.DataFrame]:
        return {w: g.reset_index(drop=True) for w, g in self.frame.groupby("well_id", sort=True)}

    def __len__(self) -> int:
        return len(self.frame)

    def records(self) -> Iterator[WellRecord]:
        for row in self.frame.itertuples(index=False):
            values = {c: _none_if_nan(getattr(row, c)) for c in NUMERIC_COLUMNS}
            flags = tuple(f"{k}:{v}" for k, v in sorted(parse_flags(row.quality_flags).items()))
            yield WellRecord(row.well_id, row.date.date(), quality_flags=flags, **values)

    def equals(self, other: "FieldDataset") -> bool:
        return self.field_id == other.field_id and frames_identical(self.frame, other.frame)


def _none_if_nan(v):
    return None if (v is None or (isinstance(v, float) and math.isnan(v))) else float(v)


def empty_frame() -> pd.DataFrame:
    frame = pd.DataFrame({c: pd.Series(dtype=float) for c in NUMERIC_COLUMNS})
    frame.insert(0, "date", pd.Series(dtype="datetime64[ns]"))
    frame.insert(0, "well_id", pd.Series(dtype=object))
    frame["quality_flags"] = pd.Series(dtype=object)
    return frame


def normalize_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """Coerce dtypes, add missing bookkeeping columns and sort."""
    frame = frame.copy()
    if "quality_flags" not in frame:
        frame["quality_flags"] = ""
    frame["quality_flags"] = frame["quality_flags"].fillna("").astype(object)
    frame["well_id"] = frame["well_id"].astype(str).astype(object)
    frame["date"] = pd.to_datetime(frame["date"]).astype("datetime64[ns]")
    for c in NUMERIC_COLUMNS:
        if c not in frame:
            frame[c] = np.nan
        frame[c] = frame[c].astype(float)
    extra = [c for c in frame.columns if c not in COLUMNS]
    frame = frame[list(COLUMNS) + extra]
    return frame.sort_values(["well_id", "date"], kind="mergesort").reset_index(drop=True)


def frames_identical(a: pd.DataFrame, b: pd.DataFrame) -> bool:
    """Bitwise equality with NaN == NaN."""
    if list(a.columns) != list(b.columns) or len(a) != len(b):
        return False
    for c in a.columns:
        x, y = a[c].to_numpy(), b[c].to_numpy()
        if x.dtype.kind == "f":
            if not np.array_equal(x, y, equal_nan=True):
                return False
        elif not (x == y).all():
            return False
    return True


def check_invariants(ds: FieldDataset) -> None:
    """Raise on duplicate (well, day) pairs or per-well depth drift."""
    frame = ds.frame
    dup = frame.duplicated(["well_id", "date"])
    if dup.any():
        row = frame[dup].iloc[0]
        raise DuplicateTimestamp(f"well {row.well_id!r} has two rows for {row.date.date()}")
    depth = frame.dropna(subset=["depth_pdg"]).groupby("well_id")["depth_pdg"].nunique()
    bad = depth[depth > 1]
    if len(bad):
        raise InconsistentDepth(f"depth_pdg varies within wells: {sorted(bad.index)}")


def _parse_cell(name: str, text: str, flags: dict[str, str]) -> float:
    text = text.strip()
    if text == "":
        flags.setdefault(name, "null")
        return math.nan
    try:
        value = float(text)
    except ValueError:
        flags[name] = "error"
        return math.nan
    if not math.isfinite(value):
        flags[name] = "error"
        return math.nan
    if name in RATE_COLUMNS and value < 0:
        flags[name] = "error"
    elif name == "open_hours" and not 0.0 <= value <= 24.0:
        flags[name] = "error"
    elif name == "choke_aperture":
        if value < 0:
            flags[name] = "error"
        elif value > 100.0:
            flags.setdefault(name, "warn")
    return value


def load_csv(path, schema: Mapping[str, str] | None = None, field_id: str | None = None) -> FieldDataset:
    """Read one field file.

    ``schema`` maps canonical column names to the names used in the file
    header; unmapped names are expected verbatim.
    """
    path = Path(path)
    schema = dict(schema or {})
    names = {c: schema.get(c, c) for c in COLUMNS}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not any(f.strip() for f in reader.fieldnames):
            raise EmptyFile(f"{path} has no header")
        header = set(reader.fieldnames)
        required = [c for c in COLUMNS if c != "quality_flags"]
        missing = [names[c] for c in required if names[c] not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        has_flags = names["quality_flags"] in header
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            flags = parse_flags(raw[names["quality_flags"]]) if has_flags else {}
            well = (raw[names["well_id"]] or "").strip()
            try:
                date = dt.date.fromisoformat(raw[names["date"]].strip())
            except (ValueError, AttributeError) as exc:
                raise SoftSensorError(f"{path}:{lineno}: bad date {raw[names['date']]!r}") from exc
            if not well:
                raise SoftSensorError(f"{path}:{lineno}: empty well_id")
            row = {"well_id": well, "date": date}
            for c in NUMERIC_COLUMNS:
                row[c] = _parse_cell(c, raw[names[c]] or "", flags)
            row["quality_flags"] = format_flags(flags)
            rows.append(row)
    frame = pd.DataFrame(rows) if rows else empty_frame()
    ds = FieldDataset.from_frame(field_id or path.stem, frame, provenance=str(path))
    check_invariants(ds)
    log.debug("loaded %d records for %d wells from %s", len(ds), len(ds.well_ids), path)
    return ds


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def save_csv(ds: FieldDataset, path) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly.

    The file is written to a temporary sibling and renamed into place.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    frame = ds.frame
    try:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            cols = [frame[c].to_numpy() for c in NUMERIC_COLUMNS]
            wells = frame["well_id"].to_numpy()
            dates = frame["date"].dt.strftime("%Y-%m-%d").to_numpy()
            flags = frame["quality_flags"].to_numpy()
            for i in range(len(frame)):
                writer.writerow([wells[i], dates[i], *(_fmt(col[i]) for col in cols), flags[i]])
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
