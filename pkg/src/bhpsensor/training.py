"""Well-grouped cross-validation, grid search and repeated-run statistics.

Folds partition wells, never records.  In every round the feature and
target scalers are fit on the training folds only and the validation fold
is used for scoring alone (no early stopping on it), so validation records
cannot reach the trained weights.
"""
from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .conditioning import FEATURE_SETS, INPUT_CANDIDATES, TARGET, FeatureSet, WindowedSet, fit_scaler, window_samples
from .errors import InvalidConfig, IoFailure, TooFewSamples, TooFewWells
from .evaluation.metrics import all_metrics
from .evaluation.reports import as_row, result_table
from .models import LstmModel, MlpModel, TrainSpec, ridge_fit, train
from .models.activations import LSTM_ACTIVATIONS, MLP_ACTIVATIONS

log = logging.getLogger(__name__)

FAMILY_ALIASES = {"lr": "ridge", "ridge": "ridge", "nn": "mlp", "mlp": "mlp", "lstm": "lstm"}
FAMILY_LABELS = {"ridge": "LR", "mlp": "NN", "lstm": "LSTM"}
SCALER_KINDS = ("minmax", "standard")

LR_RANGE = (1e-4, 3e-3)
DROPOUT_RANGE = (0.05, 0.50)  # 0 is also accepted and means "no dropout"
P_RANGE = (2, 15)

DEFAULT_RUNS = 3
# training knobs shared by the neural families; the grid may override any of them
NEURAL_DEFAULTS = {"activation": "tanh", "dropout": 0.0, "loss": "mse", "learning_rate": 1e-3,
                   "epochs": 300, "batch_size": 256}


# --------------------------------------------------------------------------
# folds


def kfold_by_well(wells, k: int = 5, seed: int = 0) -> list[list[str]]:
    """Randomly assign wells to ``k`` folds whose sizes differ by at most one.

    ``wells`` is a frame with a ``well_id`` column or an iterable of ids.
    """
    if k < 2:
        raise InvalidConfig("k must be >= 2 so that a validation fold exists")
    ids = wells["well_id"].unique() if isinstance(wells, pd.DataFrame) else wells
    ids = sorted(set(map(str, ids)))
    if len(ids) < k:
        raise TooFewWells(f"{len(ids)} wells cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    return [sorted(ids[i] for i in chunk) for chunk in np.array_split(order, k)]


def _canonical(folds: Sequence[Sequence[str]]) -> list[list[str]]:
    # fold order must not change results: fix a content-based order
    return sorted((sorted(map(str, f)) for f in folds), key=lambda f: f[0] if f else "")


# --------------------------------------------------------------------------
# search space


def resolve_feature_set(name: str) -> FeatureSet:
    """``"Set3"`` or a named set with extra columns, ``"Set3+q_gaslift"``."""
    base, *extra = name.split("+")
    if base not in FEATURE_SETS:
        raise InvalidConfig(f"unknown feature set {base!r}")
    bad = [c for c in extra if c not in INPUT_CANDIDATES]
    if bad:
        raise InvalidConfig(f"unknown input columns {bad}")
    fs = FeatureSet.named(base)
    return fs.extend(extra, set_id=name) if extra else fs


@dataclass(frozen=True)
class ModelConfig:
    """One point of a search space."""

    config_id: str
    family: str  # ridge | mlp | lstm
    feature_set: str
    scaler: str
    hyper: dict

    @property
    def p(self) -> int:
        return int(self.hyper.get("p", 0)) if self.family == "lstm" else 0

    def features(self) -> FeatureSet:
        return resolve_feature_set(self.feature_set)

    def train_spec(self, seed: int, patience: int | None = None) -> TrainSpec:
        h = self.hyper
        return TrainSpec(loss=h["loss"], learning_rate=float(h["learning_rate"]), epochs=int(h["epochs"]),
                         batch_size=int(h["batch_size"]), seed=seed, patience=patience)

    def label(self) -> str:
        parts = [FAMILY_LABELS[self.family], self.feature_set, self.scaler]
        parts += [f"{k}={self.hyper[k]}" for k in sorted(self.hyper)]
        return " ".join(str(x) for x in parts)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(d["config_id"], d["family"], d["feature_set"], d["scaler"], dict(d["hyper"]))


def _check_value(family: str, key: str, value) -> None:
    def bad(msg):
        raise InvalidConfig(f"{FAMILY_LABELS[family]} {key}={value!r}: {msg}")

    if key == "alpha":
        if not value >= 0:
            bad("must be >= 0")
    elif key == "learning_rate":
        if not LR_RANGE[0] <= value <= LR_RANGE[1]:
            bad(f"outside {LR_RANGE}")
    elif key == "dropout":
        if value != 0 and not DROPOUT_RANGE[0] <= value <= DROPOUT_RANGE[1]:
            bad(f"must be 0 or inside {DROPOUT_RANGE}")
    elif key == "activation":
        allowed = MLP_ACTIVATIONS if family == "mlp" else LSTM_ACTIVATIONS
        if value not in allowed:
            bad(f"not in {allowed}")
    elif key == "loss":
        if value not in ("mse", "mae", "smape"):
            bad("unknown loss")
    elif key == "hidden":
        if not (1 <= len(value) <= 3 and all(20 <= int(u) <= 300 for u in value)):
            bad("needs 1 to 3 layers of 20 to 300 units")
    elif key == "hidden_size":
        if not 20 <= value <= 200:
            bad("outside [20, 200]")
    elif key == "n_layers":
        if not 1 <= value <= 3:
            bad("outside [1, 3]")
    elif key == "p":
        if not P_RANGE[0] <= value <= P_RANGE[1]:
            bad(f"outside {P_RANGE}")
    elif key in ("epochs", "batch_size"):
        if not int(value) >= 1:
            bad("must be >= 1")
    else:
        bad("unknown hyperparameter")


REQUIRED = {"ridge": ("alpha",), "mlp": ("hidden",), "lstm": ("hidden_size", "n_layers", "p")}


@dataclass
class SearchSpace:
    family: str
    grids: dict[str, list]
    feature_sets: list[str] = field(default_factory=lambda: ["Set3"])
    scalers: list[str] = field(default_factory=lambda: ["minmax"])

    def __post_init__(self):
        fam = FAMILY_ALIASES.get(str(self.family).lower())
        if fam is None:
            raise InvalidConfig(f"unknown model family {self.family!r}")
        self.family = fam
        self.grids = {k: list(v) for k, v in self.grids.items()}
        self.validate()

    def validate(self) -> None:
        for k in REQUIRED[self.family]:
            if not self.grids.get(k):
                raise InvalidConfig(f"{FAMILY_LABELS[self.family]} grid needs values for {k!r}")
        for k, values in self.grids.items():
            if not values:
                raise InvalidConfig(f"empty grid for {k!r}")
            if self.family == "ridge" and k != "alpha":
                raise InvalidConfig(f"LR grid only takes 'alpha', got {k!r}")
            for v in values:
                _check_value(self.family, k, v)
        for fs in self.feature_sets:
            resolve_feature_set(fs)
        for s in self.scalers:
            if s not in SCALER_KINDS:
                raise InvalidConfig(f"unknown scaler {s!r}")
        if not self.feature_sets or not self.scalers:
            raise InvalidConfig("feature_sets and scalers must be nonempty")

    def configs(self) -> list[ModelConfig]:
        keys = sorted(self.grids)
        base = {} if self.family == "ridge" else dict(NEURAL_DEFAULTS)
        out = []
        for fs, sc in itertools.product(self.feature_sets, self.scalers):
            for values in itertools.product(*(self.grids[k] for k in keys)):
                hyper = {**base, **dict(zip(keys, values))}
                if "hidden" in hyper:
                    hyper["hidden"] = [int(u) for u in hyper["hidden"]]
                cid = f"{FAMILY_LABELS[self.family]}-{len(out) + 1:03d}"
                out.append(ModelConfig(cid, self.family, fs, sc, hyper))
        return out

    def __len__(self) -> int:
        return len(self.feature_sets) * len(self.scalers) * int(np.prod([len(v) for v in self.grids.values()]))

    def to_dict(self) -> dict:
        return {"family": self.family, "grids": self.grids, "feature_sets": self.feature_sets, "scalers": self.scalers}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(d["family"], d["grids"], d.get("feature_sets", ["Set3"]), d.get("scalers", ["minmax"]))

    @classmethod
    def from_json(cls, path) -> "SearchSpace":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc


# --------------------------------------------------------------------------
# fitting one configuration


def fit_model(config: ModelConfig, train_frame: pd.DataFrame, seed: int = 0,
              validation_frame: pd.DataFrame | None = None, patience: int | None = None):
    """Fit scalers and weights for ``config`` on ``train_frame`` alone.

    ``validation_frame`` (optional) drives early stopping for final fits;
    cross-validation never passes one.
    """
    fs = config.features()
    if len(train_frame) == 0:
        raise TooFewSamples("empty training frame")
    scaler = fit_scaler(train_frame[list(fs.columns)].to_numpy(dtype=float), config.scaler, fs.columns,
                        allow_constant=True)
    data = window_samples(train_frame, fs, config.p)
    if len(data) == 0:
        raise TooFewSamples(f"no windows with p={config.p} in the training data")
    h = config.hyper
    if config.family == "ridge":
        model = ridge_fit(scaler.transform(data.x[:, -1, :]), data.y, float(h["alpha"]))
        model.scaler, model.feature_set = scaler, fs
        model.meta = {"config": config.to_dict(), "seed": seed}
        return model
    target_scaler = fit_scaler(train_frame[TARGET].to_numpy(dtype=float), config.scaler, (TARGET,))
    if config.family == "mlp":
        model = MlpModel.create(len(fs), h["hidden"], h["activation"], h["dropout"], seed=seed, feature_set=fs)
    else:
        model = LstmModel.create(len(fs), int(h["hidden_size"]), int(h["n_layers"]), p=int(h["p"]),
                                 activation=h["activation"], dropout=h["dropout"], seed=seed, feature_set=fs)
    model.scaler, model.target_scaler = scaler, target_scaler
    val = window_samples(validation_frame, fs, config.p) if validation_frame is not None else None
    model, hist = train(model, data, config.train_spec(seed, patience if val is not None else None), validation=val)
    model.meta = {**model.meta, "config": config.to_dict(), "loss_curve": hist.loss}
    return model


def windows_for(model, frame: pd.DataFrame) -> WindowedSet:
    return window_samples(frame, model.feature_set, model.p)


def evaluate_model(model, frame: pd.DataFrame) -> dict[str, float]:
    data = windows_for(model, frame)
    if len(data) == 0:
        raise TooFewSamples("no windows to evaluate")
    return {**all_metrics(model.predict(data.x), data.y), "n": len(data)}


# --------------------------------------------------------------------------
# cross-validation


def _std(values) -> float:
    values = np.asarray(values, dtype=float)
    # identical runs (ridge) must report exactly zero, not rounding residue
    if np.all(values == values[0]):
        return 0.0
    return float(np.std(values))


def run_seed(seed: int, run: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, run, fold]).generate_state(1)[0])


@dataclass
class CvResult:
    config: ModelConfig
    fold_metrics: list[list[dict]]  # [run][fold] -> metrics
    runtime_s: float = 0.0

    @property
    def config_id(self) -> str:
        return self.config.config_id

    @property
    def k(self) -> int:
        return len(self.fold_metrics[0])

    @property
    def runs(self) -> int:
        return len(self.fold_metrics)

    def run_means(self, metric: str) -> list[float]:
        return [float(np.mean([f[metric] for f in run])) for run in self.fold_metrics]

    def mean(self, metric: str) -> float:
        return float(np.mean(self.run_means(metric)))

    def std(self, metric: str) -> float:
        """Standard deviation of the fold-averaged metric across repeated runs."""
        return _std(self.run_means(metric))

    def fold_std(self, metric: str) -> float:
        return _std([f[metric] for run in self.fold_metrics for f in run])

    def summary(self) -> dict:
        out = {"config_id": self.config_id, "model": self.config.label(), "runs": self.runs, "k": self.k,
               "runtime_s": self.runtime_s}
        for m in ("mape", "smape", "nrmse", "rmse"):
            out[m] = self.mean(m)
            out[f"{m}_std"] = self.std(m)
        return out

    def to_dict(self) -> dict:
        # runtime is deliberately left out so that serialized results are reproducible byte for byte
        return {"config": self.config.to_dict(), "fold_metrics": self.fold_metrics}

    @classmethod
    def from_dict(cls, d: dict) -> "CvResult":
        return cls(ModelConfig.from_dict(d["config"]), d["fold_metrics"], d.get("runtime_s", 0.0))


def _fold_task(args):
    config, frame, train_wells, val_wells, seed = args
    train_frame = frame[frame["well_id"].isin(train_wells)]
    val_frame = frame[frame["well_id"].isin(val_wells)]
    model = fit_model(config, train_frame, seed=seed)
    return evaluate_model(model, val_frame)


def _tasks(config: ModelConfig, frame: pd.DataFrame, folds, runs: int, seed: int):
    folds = _canonical(folds)
    for r in range(runs):
        for j, val in enumerate(folds):
            train_wells = sorted(w for i, f in enumerate(folds) if i != j for w in f)
            yield (config, frame, train_wells, val, run_seed(seed, r, j))


def _map(fn, tasks, jobs: int):
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def cross_validate(config: ModelConfig, frame: pd.DataFrame, folds, runs: int = DEFAULT_RUNS, seed: int = 0,
                   jobs: int = 1) -> CvResult:
    """Train on k-1 folds and score the held-out fold, for every fold and run."""
    if runs < 1:
        raise InvalidConfig("runs must be >= 1")
    t0 = time.perf_counter()
    k = len(folds)
    flat = _map(_fold_task, _tasks(config, frame, folds, runs, seed), jobs)
    metrics = [flat[r * k : (r + 1) * k] for r in range(runs)]
    return CvResult(config, metrics, time.perf_counter() - t0)


def rank(results: list[CvResult]) -> list[CvResult]:
    return sorted(results, key=lambda r: (r.mean("mape"), r.mean("nrmse"), r.config_id))


def grid_search(space: SearchSpace, frame: pd.DataFrame, folds, runs: int = DEFAULT_RUNS, seed: int = 0,
                jobs: int = 1) -> list[CvResult]:
    """Exhaustive search; results ranked by mean MAPE, then nRMSE, then config id."""
    configs = space.configs()
    if not configs:
        raise InvalidConfig("empty search space")
    k = len(folds)
    per_config = k * runs
    t0 = time.perf_counter()
    tasks = [t for c in configs for t in _tasks(c, frame, folds, runs, seed)]
    flat = _map(_fold_task, tasks, jobs)
    elapsed = (time.perf_counter() - t0) / len(configs)
    results = []
    for i, c in enumerate(configs):
        chunk = flat[i * per_config : (i + 1) * per_config]
        results.append(CvResult(c, [chunk[r * k : (r + 1) * k] for r in range(runs)], elapsed))
        log.info("%s mape %.4f", c.config_id, results[-1].mean("mape"))
    return rank(results)


def write_cv_table(results: list[CvResult], path, title: str = "Validation") -> None:
    """Validation result CSV: ``Model, MAPE, SMAPE, nRMSE`` as mean ±std over runs, in rank order."""
    rows = [as_row(f"{r.config_id} {r.config.label()}", r) for r in results]
    result_table(rows, path, title=title, sort=False)
