"""Synthetic two-field well data with a known BHP ground truth.

Bottom-hole pressure comes from a steady-state, two-term pressure-drop model
(gravity + friction, no acceleration term).  The mixture density is a no-slip
volumetric average of liquid and free gas, where the free-gas volume is
expanded isothermally from standard conditions to an estimate of the mean
tubing pressure::

    rho_liq  = wcut * RHO_WATER + (1 - wcut) * RHO_OIL
    p_mean   = whp + 0.5 * rho_liq * g * depth / KGF_CM2           (gauge)
    v_gas    = 1000 * (q_gas + q_gaslift) * P_STD / (p_mean + P_STD)  (m3/d in situ)
    lam      = v_gas / (v_gas + q_oil + q_water)
    rho_gas  = RHO_GAS_STD * (p_mean + P_STD) / P_STD
    rho_mix  = lam * rho_gas + (1 - lam) * rho_liq
    bhp      = whp + rho_mix * g * depth / KGF_CM2 + k_f * (q_oil + q_water)**2 / tubing_id**5

Gas rates are in thousand m3/d, liquids in m3/d, pressures in kgf/cm2.
While the in-situ gas density stays below the liquid density (true for any
pressure below roughly 800 kgf/cm2) BHP decreases with gas-lift rate and
increases with depth and water cut.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import qmc

from .errors import InvalidConfig, NoFlow
from .welldata import NUMERIC_COLUMNS, RATE_COLUMNS, SENSOR_COLUMNS, FieldDataset, format_flags, parse_flags

G = 9.80665  # m/s2
KGF_CM2 = 98066.5  # Pa per kgf/cm2
P_STD = 1.033  # kgf/cm2, standard atmosphere
RHO_WATER = 1000.0  # kg/m3
RHO_OIL = 700.0  # kg/m3, live oil at tubing conditions
RHO_GAS_STD = 0.9  # kg/m3 at standard conditions
FRICTION_COEFF = 2.0e-11  # kgf/cm2 * m5 / (m3/d)2

FAULT_CLASSES = ("null", "shut_in", "short_open", "frozen", "outlier")
# Channels that receive planted gross outliers; they are all IQR-checked by default.
OUTLIER_CHANNELS = ("whp", "wht", "choke_up_p", "choke_up_t", "q_oil", "q_gas", "q_water")
NULL_CHANNELS = ("bhp", "whp", "wht", "choke_up_p", "choke_up_t", "choke_aperture", "q_oil", "q_gas", "q_water")
FROZEN_CHANNELS = ("whp", "wht", "choke_up_p", "choke_up_t", "bhp")


@dataclass(frozen=True)
class WellProps:
    depth_pdg: float
    tubing_id: float
    flowline_len: float
    base_gor: float
    wcut_trend: float
    reservoir_p0: float
    depletion_rate: float
    has_gaslift: bool
    noise_sigma: float

    def __post_init__(self):
        if self.depth_pdg <= 0 or self.tubing_id <= 0:
            raise InvalidConfig("depth_pdg and tubing_id must be positive")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be non-negative")


@dataclass(frozen=True)
class FieldProfile:
    """Distribution ranges for one field.  Values are (low, high) for uniform draws."""

    name: str
    depth_pdg: tuple[float, float]
    tubing_id: float
    flowline_len: tuple[float, float]
    q_oil: tuple[float, float]
    base_gor: tuple[float, float]
    gor_growth: tuple[float, float]  # relative increase over the whole history
    wcut0: tuple[float, float]
    wcut_growth: tuple[float, float]  # absolute increase over the whole history
    whp: tuple[float, float]
    whp_decline: tuple[float, float]  # kgf/cm2 lost over the whole history
    choke: tuple[float, float]
    gaslift_fraction: float
    gaslift_rate: tuple[float, float]
    bht: tuple[float, float]


FIELD_PROFILES = {
    "field1": FieldProfile(
        name="field1",
        depth_pdg=(4560.0, 4920.0),
        tubing_id=0.1397,
        flowline_len=(2000.0, 9000.0),
        q_oil=(3100.0, 3500.0),
        base_gor=(0.19, 0.35),
        gor_growth=(0.0, 0.04),
        wcut0=(0.06, 0.18),
        wcut_growth=(0.0, 0.02),
        whp=(120.0, 220.0),
        whp_decline=(5.0, 15.0),
        choke=(35.0, 100.0),
        gaslift_fraction=0.0,
        gaslift_rate=(0.0, 0.0),
        bht=(95.0, 110.0),
    ),
    "field2": FieldProfile(
        name="field2",
        depth_pdg=(4790.0, 4960.0),
        tubing_id=0.1397,
        flowline_len=(2000.0, 9000.0),
        q_oil=(3100.0, 3500.0),
        base_gor=(0.28, 0.46),
        gor_growth=(0.0, 0.06),
        wcut0=(0.16, 0.30),
        wcut_growth=(0.0, 0.04),
        whp=(170.0, 270.0),
        whp_decline=(5.0, 15.0),
        choke=(25.0, 90.0),
        gaslift_fraction=0.5,
        gaslift_rate=(150.0, 450.0),
        bht=(100.0, 115.0),
    ),
}


def _default_fault_rates() -> dict[str, float]:
    return {c: 0.0 for c in FAULT_CLASSES}


@dataclass(frozen=True)
class GenConfig:
    n_wells: int = 45
    n_days: int = 1500
    field_profile: str = "field1"
    seed: int = 0
    fault_rates: dict = field(default_factory=_default_fault_rates)
    noise_sigma: float = 0.005
    start_date: str = "2010-01-01"
    field_id: str | None = None
    frozen_len: tuple[int, int] = (4, 8)

    def validate(self) -> None:
        if self.n_wells < 1:
            raise InvalidConfig("n_wells must be >= 1")
        if self.n_days < 30:
            raise InvalidConfig("n_days must be >= 30")
        if self.field_profile not in FIELD_PROFILES:
            raise InvalidConfig(f"unknown field_profile {self.field_profile!r}")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be non-negative")
        unknown = set(self.fault_rates) - set(FAULT_CLASSES)
        if unknown:
            raise InvalidConfig(f"unknown fault classes {sorted(unknown)}")
        for k, v in self.fault_rates.items():
            if not 0.0 <= float(v) <= 1.0:
                raise InvalidConfig(f"fault rate {k}={v} outside [0, 1]")
        lo, hi = self.frozen_len
        if not 4 <= lo <= hi:
            raise InvalidConfig("frozen runs must last at least 4 days")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise InvalidConfig(f"bad start_date {self.start_date!r}") from exc
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must fit in 64 bits")

    @property
    def name(self) -> str:
        return self.field_id or self.field_profile

    @classmethod
    def from_json(cls, path) -> "GenConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "GenConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys {sorted(unknown)}")
        raw = dict(raw)
        rates = _default_fault_rates()
        rates.update(raw.pop("fault_rates", {}) or {})
        if "frozen_len" in raw:
            raw["frozen_len"] = tuple(raw["frozen_len"])
        cfg = cls(fault_rates=rates, **raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["frozen_len"] = list(self.frozen_len)
        return d


def mixture_density(whp, q_oil, q_gas, q_water, q_gaslift, depth):
    """No-slip mixture density in kg/m3 (see module docstring)."""
    q_liq = q_oil + q_water
    wcut = q_water / q_liq
    rho_liq = wcut * RHO_WATER + (1.0 - wcut) * RHO_OIL
    p_abs = whp + 0.5 * rho_liq * G * depth / KGF_CM2 + P_STD
    v_gas = 1000.0 * (q_gas + q_gaslift) * P_STD / p_abs
    lam = v_gas / (v_gas + q_liq)
    rho_gas = RHO_GAS_STD * p_abs / P_STD
    return lam * rho_gas + (1.0 - lam) * rho_liq


def bhp_oracle(whp, q_oil, q_gas, q_water, q_gaslift, props: WellProps, k_friction: float = FRICTION_COEFF):
    """Flowing BHP at the gauge depth. Works elementwise on arrays."""
    whp, q_oil, q_gas, q_water, q_gaslift = (np.asarray(v, dtype=float) for v in (whp, q_oil, q_gas, q_water, q_gaslift))
    if np.any(q_oil < 0) or np.any(q_gas < 0) or np.any(q_water < 0) or np.any(q_gaslift < 0):
        raise ValueError("rates must be non-negative")
    q_liq = q_oil + q_water
    if np.any(q_liq <= 0):
        raise NoFlow("oil and water rates are both zero")
    rho_mix = mixture_density(whp, q_oil, q_gas, q_water, q_gaslift, props.depth_pdg)
    dp_grav = rho_mix * G * props.depth_pdg / KGF_CM2
    dp_fric = k_friction * q_liq**2 / props.tubing_id**5
    out = whp + dp_grav + dp_fric
    return float(out) if out.ndim == 0 else out


def _well_rngs(seed: int, n: int, stream: int) -> list[np.random.Generator]:
    # one child sequence per well so per-well output does not depend on n_wells order
    root = np.random.SeedSequence([int(seed), stream])
    return [np.random.default_rng(s) for s in root.spawn(n)]


def _piecewise_choke(rng, n_days, lo, hi, center):
    """Choke aperture held constant between operator moves, wandering around ``center``."""
    out = np.empty(n_days)
    day = 0
    width = 0.2 * (hi - lo)
    while day < n_days:
        span = int(rng.integers(40, 200))
        out[day : day + span] = np.clip(center + rng.uniform(-width, width), lo, hi)
        day += span
    return np.round(out, 1)


# Per-well levels are stratified across wells (Latin hypercube) so the pooled
# field distribution is close to uniform and free of natural IQR outliers.
_LEVELS = ("depth", "flowline", "gor", "gor_growth", "wcut0", "wcut_growth", "whp", "whp_decline",
           "q_oil", "bht", "gaslift", "gaslift_level", "choke", "decline", "wht", "cooling")


def _well_levels(seed: int, n_wells: int) -> list[dict[str, float]]:
    sampler = qmc.LatinHypercube(d=len(_LEVELS), seed=np.random.default_rng([int(seed), 2]))
    u = sampler.random(n_wells)
    return [dict(zip(_LEVELS, row)) for row in u]


def _lerp(bounds, u):
    lo, hi = bounds
    return float(lo + (hi - lo) * u)


def _simulate_well(rng: np.random.Generator, prof: FieldProfile, lv: dict, n_days: int, noise_sigma: float):
    t = np.arange(n_days, dtype=float)
    frac = t / max(n_days - 1, 1)

    has_gaslift = bool(lv["gaslift"] < prof.gaslift_fraction)
    depth = float(np.round(_lerp(prof.depth_pdg, lv["depth"]), 1))
    flowline = _lerp(prof.flowline_len, lv["flowline"])
    base_gor = _lerp(prof.base_gor, lv["gor"])
    gor_growth = _lerp(prof.gor_growth, lv["gor_growth"])
    wcut0 = _lerp(prof.wcut0, lv["wcut0"])
    wcut_growth = _lerp(prof.wcut_growth, lv["wcut_growth"])
    whp0 = _lerp(prof.whp, lv["whp"])
    whp_decline = _lerp(prof.whp_decline, lv["whp_decline"])
    q0 = _lerp(prof.q_oil, lv["q_oil"])
    bht0 = _lerp(prof.bht, lv["bht"])
    period = rng.uniform(60.0, 240.0, size=4)
    phase = rng.uniform(0.0, 2 * np.pi, size=4)

    choke_center = _lerp(prof.choke, lv["choke"])
    choke = _piecewise_choke(rng, n_days, *prof.choke, center=choke_center)
    # within-well variation stays small next to the spread across wells
    decline = 1.0 - 0.02 * lv["decline"] * frac
    opening = 1.0 + 0.1 * (choke - choke_center) / 100.0
    q_oil = q0 * decline * opening * (1.0 + 0.01 * np.sin(2 * np.pi * t / period[0] + phase[0]))
    gor = base_gor * (1.0 + gor_growth * frac) * (1.0 + 0.02 * np.sin(2 * np.pi * t / period[1] + phase[1]))
    wcut = np.clip(wcut0 + wcut_growth * frac, 0.0, 0.9)
    q_gas = gor * q_oil
    q_water = wcut / (1.0 - wcut) * q_oil
    if has_gaslift:
        start = int(rng.integers(0, n_days // 2))
        level = _lerp(prof.gaslift_rate, lv["gaslift_level"])
        q_gaslift = np.where(t >= start, level * (1.0 + 0.1 * np.sin(2 * np.pi * t / period[2] + phase[2])), 0.0)
    else:
        q_gaslift = np.zeros(n_days)

    # closing the choke backs pressure up into the wellhead
    whp = whp0 - whp_decline * frac - 0.1 * (choke - choke_center) + 2.0 * np.sin(2 * np.pi * t / period[3] + phase[3])
    q_liq = q_oil + q_water
    wht = 44.0 + 10.0 * lv["wht"] + 0.8 * (q_liq - q0) / 1000.0 + 0.5 * np.sin(2 * np.pi * t / 365.25 + phase[0])
    choke_up_p = 0.25 * whp - 0.1 * (choke - choke_center) - flowline / 1000.0 + 5.0
    choke_up_t = wht - 6.0 - 3.0 * lv["cooling"]
    bht = bht0 + 1.5 * frac + 0.5 * np.sin(2 * np.pi * t / period[1] + phase[2])

    depletion = float(rng.uniform(0.005, 0.03))
    props_stub = WellProps(depth, prof.tubing_id, flowline, base_gor, wcut_growth / max(n_days - 1, 1),
                           1.0, depletion, has_gaslift, noise_sigma)
    bhp = bhp_oracle(whp, q_oil, q_gas, q_water, q_gaslift, props_stub)
    # reservoir pressure always stays above the flowing BHP it feeds
    p0 = float(np.max(bhp + depletion * t) + rng.uniform(20.0, 60.0))
    props = dataclasses.replace(props_stub, reservoir_p0=p0)

    open_hours = np.full(n_days, 24.0)
    partial = rng.random(n_days) < 0.01
    open_hours[partial] = np.round(rng.uniform(2.0, 24.0, size=int(partial.sum())), 2)

    cols = {
        "bhp": bhp,
        "bht": bht,
        "whp": whp,
        "wht": wht,
        "choke_up_p": choke_up_p,
        "choke_up_t": choke_up_t,
        "choke_aperture": choke,
        "q_oil": q_oil,
        "q_gas": q_gas,
        "q_water": q_water,
        "q_gaslift": q_gaslift,
        "depth_pdg": np.full(n_days, depth),
        "open_hours": open_hours,
    }
    if noise_sigma > 0:
        for c in SENSOR_COLUMNS + RATE_COLUMNS:
            cols[c] = cols[c] * (1.0 + noise_sigma * rng.standard_normal(n_days))
    return cols, props


def generate_field(cfg: GenConfig) -> FieldDataset:
    """Clean synthetic field; per-well properties are kept in ``meta["props"]``."""
    cfg.validate()
    prof = FIELD_PROFILES[cfg.field_profile]
    start = pd.Timestamp(cfg.start_date)
    dates = pd.date_range(start, periods=cfg.n_days, freq="D")
    prefix = "F1" if cfg.field_profile == "field1" else "F2"
    frames, props = [], {}
    levels = _well_levels(cfg.seed, cfg.n_wells)
    for i, rng in enumerate(_well_rngs(cfg.seed, cfg.n_wells, stream=0)):
        well = f"{prefix}-W{i + 1:02d}"
        cols, p = _simulate_well(rng, prof, levels[i], cfg.n_days, cfg.noise_sigma)
        frame = pd.DataFrame(cols)
        frame.insert(0, "date", dates)
        frame.insert(0, "well_id", well)
        frames.append(frame)
        props[well] = dataclasses.asdict(p)
    frame = pd.concat(frames, ignore_index=True)
    frame["quality_flags"] = ""
    return FieldDataset.from_frame(cfg.name, frame, provenance=f"synthgen seed={cfg.seed}",
                                   meta={"props": props, "config": cfg.to_dict()})


@dataclass
class FaultLedger:
    """Ground truth of every planted fault.

    Each entry: ``{"class", "well_id", "dates": [iso...], "channel"?, "value"?}``.
    """

    entries: list = field(default_factory=list)

    def records(self, fault_class: str) -> set[tuple[str, str]]:
        return {(e["well_id"], d) for e in self.entries if e["class"] == fault_class for d in e["dates"]}

    def counts(self) -> dict[str, int]:
        return {c: len(self.records(c)) for c in FAULT_CLASSES}

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"entries": self.entries, "counts": self.counts()}, fh, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "FaultLedger":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["entries"])


def inject_faults(ds: FieldDataset, cfg: GenConfig) -> tuple[FieldDataset, FaultLedger]:
    """Plant faults at per-record rates from ``cfg.fault_rates``.

    Fault sites never overlap and frozen runs keep a one-day margin from any
    other fault, so each planted record is attributable to exactly one class.
    """
    cfg.validate()
    rates = {c: float(cfg.fault_rates.get(c, 0.0)) for c in FAULT_CLASSES}
    ledger = FaultLedger()
    if not any(rates.values()) or len(ds) == 0:
        return ds, ledger

    frame = ds.frame.copy()
    # outliers sit far beyond any sensible fence: 10x the field-wide third quartile
    q3 = {c: float(np.nanquantile(frame[c].to_numpy(), 0.75)) for c in OUTLIER_CHANNELS}
    flags_col = frame["quality_flags"].to_numpy().copy()
    wells = ds.well_ids
    rngs = _well_rngs(cfg.seed, len(wells), stream=1)
    lo, hi = cfg.frozen_len

    for well, rng in zip(wells, rngs):
        idx = np.flatnonzero(frame["well_id"].to_numpy() == well)
        n = len(idx)
        used = np.zeros(n, dtype=bool)
        dates = frame["date"].to_numpy()[idx]

        def iso(k):
            return str(pd.Timestamp(dates[k]).date())

        # frozen runs first: they need contiguous free space
        n_frozen = rng.binomial(n, rates["frozen"]) if rates["frozen"] else 0
        for _ in range(n_frozen):
            length = int(rng.integers(lo, hi + 1))
            for _attempt in range(20):
                s = int(rng.integers(1, max(n - length - 1, 2)))
                if s + length + 1 <= n and not used[s - 1 : s + length + 1].any():
                    break
            else:
                continue
            channel = FROZEN_CHANNELS[int(rng.integers(len(FROZEN_CHANNELS)))]
            rows = idx[s : s + length]
            value = frame.at[rows[0], channel]
            frame.loc[rows, channel] = value
            used[s - 1 : s + length + 1] = True
            ledger.entries.append({"class": "frozen", "well_id": well, "channel": channel,
                                   "dates": [iso(k) for k in range(s, s + length)]})

        for cls in ("null", "shut_in", "short_open", "outlier"):
            if not rates[cls]:
                continue
            hits = np.flatnonzero((rng.random(n) < rates[cls]) & ~used)
            for k in hits:
                used[k] = True
                row = idx[k]
                entry = {"class": cls, "well_id": well, "dates": [iso(k)]}
                if cls == "null":
                    channel = NULL_CHANNELS[int(rng.integers(len(NULL_CHANNELS)))]
                    kind = "error" if rng.random() < 0.2 else "null"
                    frame.at[row, channel] = np.nan
                    flags = parse_flags(flags_col[row])
                    flags[channel] = kind
                    flags_col[row] = format_flags(flags)
                    entry.update(channel=channel, kind=kind)
                elif cls == "shut_in":
                    for c in ("q_oil", "q_gas", "q_water", "q_gaslift", "choke_aperture", "open_hours"):
                        frame.at[row, c] = 0.0
                elif cls == "short_open":
                    frame.at[row, "open_hours"] = float(np.round(rng.uniform(0.25, 1.9), 2))
                else:
                    channel = OUTLIER_CHANNELS[int(rng.integers(len(OUTLIER_CHANNELS)))]
                    frame.at[row, channel] = 10.0 * q3[channel]
                    entry.update(channel=channel, value=10.0 * q3[channel])
                ledger.entries.append(entry)

    frame["quality_flags"] = flags_col
    ledger.entries.sort(key=lambda e: (e["well_id"], e["dates"][0], e["class"]))
    out = FieldDataset.from_frame(ds.field_id, frame, ds.provenance, meta=ds.meta)
    return out, ledger


def generate(cfg: GenConfig) -> tuple[FieldDataset, FaultLedger]:
    """Generate a field and plant the configured faults."""
    return inject_faults(generate_field(cfg), cfg)


def write_config(cfg: GenConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True), encoding="utf-8")


__all__ = [
    "FAULT_CLASSES",
    "FIELD_PROFILES",
    "FaultLedger",
    "GenConfig",
    "WellProps",
    "bhp_oracle",
    "generate",
    "generate_field",
    "inject_faults",
    "mixture_density",
]
