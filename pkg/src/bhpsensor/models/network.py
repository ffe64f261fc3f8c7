"""Shared machinery for the neural estimators.

A network is ``body -> [adapter] -> head``.  The body (MLP hidden stack or
LSTM stack) maps a window to a representation vector; the optional adapter is
the dense layer added during frozen-base transfer, and may also read input
columns the body never sees; the head is a linear map to one output.

Parameters live in a flat ordered dict keyed ``"<layer>.<W|b>"`` so that
optimizers, freezing and gradient checks can treat every model alike.
Inputs and outputs of :meth:`Network.forward` are in scaled units.
"""
from __future__ import annotations

import copy
from typing import Any

import numpy as np

from ..conditioning import FeatureSet, ScalerParams
from ..errors import ShapeMismatch
from . import activations


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted dropout: zero with probability ``rate``, rescale the survivors."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


class Network:
    family = "network"

    def __init__(self, arch: dict, params: dict[str, np.ndarray], feature_set: FeatureSet | None = None,
                 scaler: ScalerParams | None = None, target_scaler: ScalerParams | None = None, meta: dict | None = None):
        self.arch = arch
        self.params = params
        self.feature_set = feature_set
        self.scaler = scaler
        self.target_scaler = target_scaler
        self.meta = dict(meta or {})
        self._act, self._act_grad = activations.get(arch["activation"])

    # -- structure -------------------------------------------------------

    @property
    def p(self) -> int:
        return int(self.arch.get("p", 0))

    @property
    def n_inputs(self) -> int:
        return int(self.arch["n_inputs"])

    @property
    def n_body_inputs(self) -> int:
        return int(self.arch.get("n_body_inputs", self.arch["n_inputs"]))

    @property
    def dropout(self) -> float:
        return float(self.arch.get("dropout", 0.0))

    @property
    def rep_size(self) -> int:
        raise NotImplementedError

    def body_layers(self) -> list[str]:
        raise NotImplementedError

    def layer_names(self) -> list[str]:
        names = self.body_layers()
        if self.arch.get("adapter"):
            names.append("adapter")
        return names + ["head"]

    def param_names(self, layers=None) -> list[str]:
        layers = self.layer_names() if layers is None else layers
        return [k for k in self.params if self.layer_of(k) in layers]

    def layer_of(self, name: str) -> str:
        return name.rsplit(".", 1)[0]

    def _init_head(self, rng: np.random.Generator) -> None:
        width = self.rep_size
        ad = self.arch.get("adapter")
        if ad:
            n_in = width + len(ad["extra"])
            self.params["adapter.W"] = uniform_init(rng, n_in, (n_in, ad["width"]))
            self.params["adapter.b"] = np.zeros(ad["width"])
            width = ad["width"]
        self.params["head.W"] = uniform_init(rng, width, (width, 1))
        self.params["head.b"] = np.zeros(1)

    # -- forward / backward ---------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[2] != self.n_inputs:
            raise ShapeMismatch(f"expected (n, t, {self.n_inputs}) input, got {x.shape}")
        if self.family == "lstm" and x.shape[1] != self.p + 1:
            raise ShapeMismatch(f"expected {self.p + 1} timesteps, got {x.shape[1]}")
        return x

    def _body_forward(self, x, train, rng):
        raise NotImplementedError

    def _body_backward(self, cache, drep, grads):
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        """Scaled windows ``(n, p + 1, f)`` -> scaled predictions ``(n,)`` and a backprop cache."""
        x = self._check_input(x)
        if train and self.dropout > 0 and rng is None:
            raise ValueError("training-mode dropout needs an rng")
        rep, body_cache = self._body_forward(x[:, :, : self.n_body_inputs], train, rng)
        cache: dict[str, Any] = {"body": body_cache, "rep": rep}
        h = rep
        ad = self.arch.get("adapter")
        if ad:
            a_in = np.concatenate([rep, x[:, -1, ad["extra"]]], axis=1) if ad["extra"] else rep
            pre = a_in @ self.params["adapter.W"] + self.params["adapter.b"]
            h = self._act(pre)
            cache.update(a_in=a_in, a_pre=pre, a_out=h)
        cache["h"] = h
        out = (h @ self.params["head.W"])[:, 0] + self.params["head.b"][0]
        return out, cache

    def backward(self, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        dout = dout[:, None]
        h = cache["h"]
        grads["head.W"] = h.T @ dout
        grads["head.b"] = dout.sum(axis=0)
        dh = dout @ self.params["head.W"].T
        ad = self.arch.get("adapter")
        if ad:
            dpre = dh * self._act_grad(cache["a_pre"], cache["a_out"])
            grads["adapter.W"] = cache["a_in"].T @ dpre
            grads["adapter.b"] = dpre.sum(axis=0)
            drep = (dpre @ self.params["adapter.W"].T)[:, : self.rep_size]
        else:
            drep = dh
        self._body_backward(cache["body"], drep, grads)
        return grads

    def predict_scaled(self, x: np.ndarray, batch: int = 8192) -> np.ndarray:
        x = self._check_input(x)
        if len(x) <= batch:
            return self.forward(x)[0]
        return np.concatenate([self.forward(x[i : i + batch])[0] for i in range(0, len(x), batch)])

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        """Raw windows -> pressures."""
        x = self.scaler.transform(x_raw) if self.scaler is not None else np.asarray(x_raw, dtype=float)
        z = self.predict_scaled(x)
        return self.target_scaler.inverse(z[:, None])[:, 0] if self.target_scaler is not None else z

    # -- input surgery used by transfer ---------------------------------

    def input_weight_slices(self) -> list[tuple[str, slice]]:
        """(param name, row slice) pairs multiplying the body's raw inputs."""
        raise NotImplementedError

    def grow_body_inputs(self, n_new: int) -> None:
        """Append ``n_new`` zero-weighted input columns to the body."""
        name, rows = self.input_weight_slices()[0]
        W = self.params[name]
        stop = rows.stop
        self.params[name] = np.concatenate([W[:stop], np.zeros((n_new, W.shape[1])), W[stop:]], axis=0)
        self.arch["n_body_inputs"] = self.n_body_inputs + n_new
        self.arch["n_inputs"] = self.n_inputs + n_new

    def fold_affine(self, in_ratio: np.ndarray, in_shift: np.ndarray, out_ratio: float, out_shift: float) -> None:
        """Reparameterize for new scalers without changing the function.

        New scaled input ``z'`` relates to the old one by ``z = z' * in_ratio + in_shift``;
        the old scaled output relates to the new one by ``y' = y * out_ratio + out_shift``.
        """
        in_ratio = np.asarray(in_ratio, dtype=float)
        in_shift = np.asarray(in_shift, dtype=float)
        # an identity input map leaves the input-side tensors untouched, byte for byte
        if np.any(in_ratio != 1.0) or np.any(in_shift != 0.0):
            name, rows = self.input_weight_slices()[0]
            nb = self.n_body_inputs
            W = self.params[name].copy()
            Wx = W[rows]
            self.params[self._bias_of(name)] = self.params[self._bias_of(name)] + in_shift[:nb] @ Wx
            W[rows] = Wx * in_ratio[:nb, None]
            self.params[name] = W
            ad = self.arch.get("adapter")
            if ad and ad["extra"]:
                Wa = self.params["adapter.W"].copy()
                r = slice(self.rep_size, self.rep_size + len(ad["extra"]))
                ex = np.asarray(ad["extra"])
                self.params["adapter.b"] = self.params["adapter.b"] + in_shift[ex] @ Wa[r]
                Wa[r] = Wa[r] * in_ratio[ex, None]
                self.params["adapter.W"] = Wa
        self.params["head.W"] = self.params["head.W"] * out_ratio
        self.params["head.b"] = self.params["head.b"] * out_ratio + out_shift

    @staticmethod
    def _bias_of(weight_name: str) -> str:
        return weight_name[:-1] + "b"

    # -- bookkeeping ------------------------------------------------------

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "arch": self.arch,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
            "feature_set": self.feature_set.to_dict() if self.feature_set else None,
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "target_scaler": self.target_scaler.to_dict() if self.target_scaler else None,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
        arch = copy.deepcopy(d["arch"])
        return cls(
            arch,
            params,
            FeatureSet.from_dict(d["feature_set"]) if d.get("feature_set") else None,
            ScalerParams.from_dict(d["scaler"]) if d.get("scaler") else None,
            ScalerParams.from_dict(d["target_scaler"]) if d.get("target_scaler") else None,
            d.get("meta", {}),
        )
