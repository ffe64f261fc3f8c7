"""Adapting a Field-1 base model to another field.

Two strategies:

* fine-tune: copy the base, refit every scaler on the new field's training
  data, fold the scaler change into the first-layer and head weights (the
  function is unchanged at that point), then keep training the unfrozen
  layers with a reduced learning rate and epoch budget;
* new layer: keep every base parameter frozen, insert a dense adapter
  between the base representation and a fresh head, and train only those.

Input columns the base never saw (gas lift) enter through zero-initialized
weights: in the first layer for fine-tuning, in the adapter for the
frozen-base strategy.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .conditioning import TARGET, FeatureSet, fit_scaler, window_samples
from .errors import IncompatibleFeatures, InvalidConfig, IoFailure, TooFewSamples
from .models import Network, TrainSpec, dumps, train
from .models.network import uniform_init

STRATEGIES = ("fine_tune", "new_layer")
# fine-tuning trains a known-good network gently; a new layer starts from random weights
DEFAULT_SCALES = {"fine_tune": (0.1, 0.3), "new_layer": (1.0, 0.3)}


@dataclass
class TransferSpec:
    strategy: str = "fine_tune"
    lr_scale: float | None = None
    epochs_scale: float | None = None
    new_layer_width: int | None = None  # default: base hidden size
    unfrozen: str = "all"  # all | head | last:K
    input_adapter: list[str] = field(default_factory=list)  # columns added for the new field
    zero_head: bool = False
    patience: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"strategy must be one of {STRATEGIES}")
        lr, ep = DEFAULT_SCALES[self.strategy]
        self.lr_scale = lr if self.lr_scale is None else float(self.lr_scale)
        self.epochs_scale = ep if self.epochs_scale is None else float(self.epochs_scale)
        self.input_adapter = list(self.input_adapter)
        self.validate()

    def validate(self) -> None:
        # lr_scale = 0 is accepted: it is the null-update limit used to check that adaptation starts from the base
        if not 0.0 <= self.lr_scale <= 1.0:
            raise InvalidConfig("lr_scale must lie in [0, 1]")
        if not 0.0 < self.epochs_scale <= 1.0:
            raise InvalidConfig("epochs_scale must lie in (0, 1]")
        if self.new_layer_width is not None and self.new_layer_width < 1:
            raise InvalidConfig("new_layer_width must be >= 1")
        u = self.unfrozen
        if not (u in ("all", "head") or (u.startswith("last:") and u[5:].isdigit() and int(u[5:]) >= 1)):
            raise InvalidConfig(f"unfrozen must be 'all', 'head' or 'last:K', got {u!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransferSpec":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TransferSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc


def model_hash(model) -> str:
    return hashlib.sha256(dumps(model).encode("utf-8")).hexdigest()


def _require_network(base) -> None:
    if not isinstance(base, Network):
        raise InvalidConfig(f"transfer needs an MLP or LSTM base, got {type(base).__name__}")


def _added_columns(base: Network, new_features: FeatureSet | list[str]) -> list[str]:
    cols = list(new_features.columns if isinstance(new_features, FeatureSet) else new_features)
    missing = [c for c in base.feature_set.columns if c not in cols]
    if missing:
        raise IncompatibleFeatures(f"removing base inputs is not supported: {missing}")
    return [c for c in cols if c not in base.feature_set.columns]


def _fit_columns(frame: pd.DataFrame, columns, kind: str):
    return fit_scaler(frame[list(columns)].to_numpy(dtype=float), kind, tuple(columns), allow_constant=True)


def adapt_input(base: Network, new_features: FeatureSet | list[str], fit_frame: pd.DataFrame) -> Network:
    """Copy of ``base`` with extra body inputs whose weights are all zero.

    Existing columns keep their order and scaler; added columns are appended
    and scaled with parameters fit on ``fit_frame`` (new-field training data).
    Before any retraining the copy computes exactly the base function.
    """
    _require_network(base)
    added = _added_columns(base, new_features)
    model = base.copy()
    if not added:
        return model
    if model.arch.get("adapter"):
        raise InvalidConfig("adapt_input expects a model without an adapter layer")
    model.grow_body_inputs(len(added))
    model.scaler = model.scaler.concat(_fit_columns(fit_frame, added, model.scaler.kind))
    model.feature_set = base.feature_set.extend(added)
    model.meta = {**model.meta, "added_inputs": added}
    return model


def refit_scalers(model: Network, frame: pd.DataFrame, inputs: bool = True) -> Network:
    """Refit the target scaler (and the input scaler unless ``inputs`` is False) on ``frame``.

    The change is folded into the first-layer and head weights, so the
    returned model computes the same function as ``model`` up to rounding.
    """
    model = model.copy()
    old_x, old_y = model.scaler, model.target_scaler
    new_x = _fit_columns(frame, model.feature_set.columns, old_x.kind) if inputs else old_x
    new_y = fit_scaler(frame[TARGET].to_numpy(dtype=float), old_y.kind, (TARGET,))
    in_ratio = new_x.scale / old_x.scale
    in_shift = (new_x.offset - old_x.offset) / old_x.scale
    out_ratio = float(old_y.scale[0] / new_y.scale[0])
    out_shift = float((old_y.offset[0] - new_y.offset[0]) / new_y.scale[0])
    model.fold_affine(in_ratio, in_shift, out_ratio, out_shift)
    model.scaler, model.target_scaler = new_x, new_y
    return model


def _schedule(base: Network, spec: TransferSpec, seed: int) -> TrainSpec:
    ts = dict(base.meta.get("train_spec") or TrainSpec().to_dict())
    return TrainSpec(loss=ts["loss"], learning_rate=ts["learning_rate"] * spec.lr_scale,
                     epochs=max(1, int(round(ts["epochs"] * spec.epochs_scale))), batch_size=ts["batch_size"],
                     seed=seed, patience=spec.patience)


def unfrozen_layers(model: Network, unfrozen: str) -> list[str]:
    names = model.layer_names()
    if unfrozen == "all":
        return names
    if unfrozen == "head":
        return ["head"]
    return names[-int(unfrozen[5:]) :]


def _windows(model: Network, frame: pd.DataFrame):
    data = window_samples(frame, model.feature_set, model.p)
    if len(data) == 0:
        raise TooFewSamples("no training windows in the new field's data")
    return data


def _provenance(model: Network, base: Network, spec: TransferSpec, hist) -> None:
    model.meta = {**model.meta, "transfer": {"base_sha256": model_hash(base), "spec": spec.to_dict(),
                                             "loss_curve": hist.loss if hist else []}}


def fine_tune(base: Network, spec: TransferSpec, train_frame: pd.DataFrame, seed: int = 0,
              validation_frame: pd.DataFrame | None = None) -> Network:
    """Adapt a copy of ``base`` by continued training on new-field data."""
    _require_network(base)
    if spec.strategy != "fine_tune":
        raise InvalidConfig("fine_tune needs strategy 'fine_tune'")
    model = adapt_input(base, base.feature_set.extend(spec.input_adapter), train_frame)
    trainable = unfrozen_layers(model, spec.unfrozen)
    # refitting the input scaler rewrites first-layer weights, so a frozen first layer keeps the base scaling
    model = refit_scalers(model, train_frame, inputs="body.0" in trainable)
    val = window_samples(validation_frame, model.feature_set, model.p) if validation_frame is not None else None
    model, hist = train(model, _windows(model, train_frame), _schedule(base, spec, seed), validation=val,
                        trainable=trainable)
    _provenance(model, base, spec, hist)
    return model


def build_new_layer_model(base: Network, spec: TransferSpec, train_frame: pd.DataFrame, seed: int = 0) -> Network:
    """Untrained frozen-base extension: base body, new adapter, fresh head."""
    _require_network(base)
    if base.arch.get("adapter"):
        raise InvalidConfig("base already carries an adapter layer")
    added = _added_columns(base, base.feature_set.extend(spec.input_adapter))
    model = base.copy()
    n_base = base.n_inputs
    model.arch["n_inputs"] = n_base + len(added)
    model.arch["n_body_inputs"] = base.n_body_inputs
    width = spec.new_layer_width or model.rep_size
    model.arch["adapter"] = {"width": int(width), "extra": list(range(n_base, n_base + len(added)))}
    # the frozen body keeps its own input scaling; only new columns and the new head see new-field statistics
    if added:
        model.scaler = model.scaler.concat(_fit_columns(train_frame, added, model.scaler.kind))
        model.feature_set = base.feature_set.extend(added)
    model.target_scaler = fit_scaler(train_frame[TARGET].to_numpy(dtype=float), base.target_scaler.kind, (TARGET,))
    rng = np.random.default_rng(seed)
    n_in = model.rep_size + len(added)
    model.params["adapter.W"] = uniform_init(rng, n_in, (n_in, width))
    model.params["adapter.b"] = np.zeros(width)
    if spec.zero_head:
        model.params["head.W"] = np.zeros((width, 1))
    else:
        model.params["head.W"] = uniform_init(rng, width, (width, 1))
    model.params["head.b"] = np.zeros(1)
    return model


def extend_with_new_layer(base: Network, spec: TransferSpec, train_frame: pd.DataFrame, seed: int = 0,
                          validation_frame: pd.DataFrame | None = None) -> Network:
    """Train only the new adapter and head on new-field data; base weights stay bitwise fixed."""
    if spec.strategy != "new_layer":
        raise InvalidConfig("extend_with_new_layer needs strategy 'new_layer'")
    model = build_new_layer_model(base, spec, train_frame, seed)
    val = window_samples(validation_frame, model.feature_set, model.p) if validation_frame is not None else None
    model, hist = train(model, _windows(model, train_frame), _schedule(base, spec, seed), validation=val,
                        trainable=["adapter", "head"])
    _provenance(model, base, spec, hist)
    return model


def transfer(base: Network, spec: TransferSpec, train_frame: pd.DataFrame, seed: int = 0,
             validation_frame: pd.DataFrame | None = None) -> Network:
    fn = fine_tune if spec.strategy == "fine_tune" else extend_with_new_layer
    return fn(base, spec, train_frame, seed=seed, validation_frame=validation_frame)


def frozen_unchanged(base: Network, adapted: Network) -> bool:
    """True when every base body tensor is byte-identical in ``adapted``."""
    return all(
        k in adapted.params and adapted.params[k].tobytes() == v.tobytes()
        for k, v in base.params.items()
        if adapted.layer_of(k).startswith("body.")
    )
