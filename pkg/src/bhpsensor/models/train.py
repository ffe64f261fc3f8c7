"""Mini-batch training loop for the neural estimators.

``train`` takes raw (unscaled) windows and pressures; the model's attached
scalers define the training units.  MSE and MAE act on scaled targets, SMAPE
on de-normalized pressures so that its percentage meaning is preserved.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..conditioning import WindowedSet
from ..errors import DivergenceDetected, InvalidConfig, TooFewSamples
from . import losses
from .network import Network
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainSpec:
    loss: str = "mse"
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 256
    seed: int = 0
    patience: int | None = 20  # epochs without validation improvement; None disables early stopping

    def validate(self) -> None:
        if self.loss not in losses.LOSSES:
            raise InvalidConfig(f"loss must be one of {losses.LOSSES}")
        if not (self.learning_rate >= 0 and np.isfinite(self.learning_rate)):
            raise InvalidConfig("learning_rate must be finite and >= 0")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise InvalidConfig("patience must be >= 1 or None")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainSpec":
        spec = cls(**d)
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path) -> "TrainSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)  # mean training loss per epoch
    val_mape: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 means no validation set was given
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _targets(model: Network, y: np.ndarray) -> np.ndarray:
    return model.target_scaler.transform(y[:, None])[:, 0] if model.target_scaler is not None else y


def loss_and_grads(model: Network, x: np.ndarray, y_raw: np.ndarray, y_scaled: np.ndarray, kind: str,
                   train: bool = False, rng: np.random.Generator | None = None):
    """Loss on one batch of scaled windows and its gradient for every parameter."""
    out, cache = model.forward(x, train=train, rng=rng)
    if kind == "smape":
        ts = model.target_scaler
        scale = float(ts.scale[0]) if ts is not None else 1.0
        pred = ts.inverse(out[:, None])[:, 0] if ts is not None else out
        value = losses.loss(kind, pred, y_raw)
        dout = losses.loss_grad(kind, pred, y_raw) * scale
    else:
        value = losses.loss(kind, out, y_scaled)
        dout = losses.loss_grad(kind, out, y_scaled)
    return value, model.backward(cache, dout)


def _mape(pred: np.ndarray, actual: np.ndarray) -> float:
    return float(100.0 * np.mean(np.abs(pred - actual) / np.abs(actual)))


def train(model: Network, data: WindowedSet, spec: TrainSpec, validation: WindowedSet | None = None,
          trainable: list[str] | None = None) -> tuple[Network, TrainHistory]:
    """Fit a copy of ``model``; the argument itself is left untouched.

    ``trainable`` lists the layer names to update (default: every layer).
    With a validation set, the parameters of the epoch with the lowest
    validation MAPE are restored at the end.
    """
    spec.validate()
    if len(data) == 0:
        raise TooFewSamples("no training samples")
    t0 = time.perf_counter()
    model = model.copy()
    layers = model.layer_names() if trainable is None else list(trainable)
    unknown = set(layers) - set(model.layer_names())
    if unknown:
        raise InvalidConfig(f"unknown layers {sorted(unknown)}")
    names = model.param_names(layers)
    opt = Adam(spec.learning_rate, names, model.params)
    rng = np.random.default_rng(spec.seed)

    x = model.scaler.transform(data.x) if model.scaler is not None else np.asarray(data.x, dtype=float)
    y_raw = np.asarray(data.y, dtype=float)
    y_s = _targets(model, y_raw)
    n = len(y_raw)
    hist = TrainHistory()
    best = (np.inf, None)
    stale = 0
    for epoch in range(1, spec.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, spec.batch_size):
            idx = order[start : start + spec.batch_size]
            value, grads = loss_and_grads(model, x[idx], y_raw[idx], y_s[idx], spec.loss, train=True, rng=rng)
            if not np.isfinite(value):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            opt.step(model.params, grads)
            total += value * len(idx)
        epoch_loss = total / n
        hist.loss.append(epoch_loss)
        if not all(np.isfinite(v).all() for v in model.params.values()):
            raise DivergenceDetected(f"non-finite parameters at epoch {epoch}")
        if validation is not None and len(validation):
            score = _mape(model.predict(validation.x), validation.y)
            if not np.isfinite(score):
                raise DivergenceDetected(f"non-finite validation MAPE at epoch {epoch}")
            hist.val_mape.append(score)
            if score < best[0]:
                best = (score, {k: v.copy() for k, v in model.params.items()})
                hist.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if spec.patience is not None and stale >= spec.patience:
                    log.debug("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
                    break
    if best[1] is not None:
        model.params = best[1]
    hist.runtime_s = time.perf_counter() - t0
    model.meta = {**model.meta, "train_spec": spec.to_dict(), "best_epoch": hist.best_epoch,
                  "epochs_run": len(hist.loss), "trainable": layers}
    return model, hist
