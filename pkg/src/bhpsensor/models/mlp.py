"""Feed-forward estimator: dense hidden layers on the current day's features."""
from __future__ import annotations

import numpy as np

from ..conditioning import FeatureSet
from ..errors import InvalidConfig
from . import activations
from .network import Network, dropout_mask, uniform_init

MAX_LAYERS = 3
UNITS_RANGE = (20, 300)


class MlpModel(Network):
    family = "mlp"

    @classmethod
    def create(cls, n_inputs: int, hidden: list[int], activation: str = "relu", dropout: float = 0.0,
               seed: int = 0, feature_set: FeatureSet | None = None) -> "MlpModel":
        hidden = [int(h) for h in hidden]
        if not 1 <= len(hidden) <= MAX_LAYERS:
            raise InvalidConfig(f"MLP needs 1 to {MAX_LAYERS} hidden layers, got {len(hidden)}")
        if any(not UNITS_RANGE[0] <= h <= UNITS_RANGE[1] for h in hidden):
            raise InvalidConfig(f"hidden widths must lie in {UNITS_RANGE}, got {hidden}")
        if activation not in activations.MLP_ACTIVATIONS:
            raise InvalidConfig(f"MLP activation must be one of {activations.MLP_ACTIVATIONS}")
        if not 0.0 <= dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)")
        arch = {"n_inputs": int(n_inputs), "n_body_inputs": int(n_inputs), "hidden": hidden,
                "activation": activation, "dropout": float(dropout), "p": 0, "adapter": None}
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        fan_in = n_inputs
        for i, h in enumerate(hidden):
            params[f"body.{i}.W"] = uniform_init(rng, fan_in, (fan_in, h))
            params[f"body.{i}.b"] = np.zeros(h)
            fan_in = h
        model = cls(arch, params, feature_set, meta={"seed": seed})
        model._init_head(rng)
        return model

    @property
    def rep_size(self) -> int:
        return self.arch["hidden"][-1]

    def body_layers(self) -> list[str]:
        return [f"body.{i}" for i in range(len(self.arch["hidden"]))]

    def input_weight_slices(self):
        return [("body.0.W", slice(0, self.n_body_inputs))]

    def _body_forward(self, x, train, rng):
        # only the current day's row is used
        h = x[:, -1, :]
        layers = []
        rate = self.dropout
        for i in range(len(self.arch["hidden"])):
            pre = h @ self.params[f"body.{i}.W"] + self.params[f"body.{i}.b"]
            out = self._act(pre)
            mask = dropout_mask(rng, out.shape, rate) if train and rate > 0 else None
            layers.append((h, pre, out, mask))
            h = out * mask if mask is not None else out
        return h, layers

    def _body_backward(self, layers, drep, grads):
        dh = drep
        for i in reversed(range(len(layers))):
            h_in, pre, out, mask = layers[i]
            if mask is not None:
                dh = dh * mask
            dpre = dh * self._act_grad(pre, out)
            grads[f"body.{i}.W"] = h_in.T @ dpre
            grads[f"body.{i}.b"] = dpre.sum(axis=0)
            if i:
                dh = dpre @ self.params[f"body.{i}.W"].T
