"""Stacked LSTM estimator trained by backpropagation through time.

Per layer a single weight matrix ``W`` of shape ``(n_in + H, 4H)`` maps
``[x_t, h_{t-1}]`` to the gate pre-activations in the order input, forget,
output, candidate.  Gates use the logistic sigmoid; the candidate and the
cell-state squash use the configured activation (tanh by default).

The input projection for every timestep is one matmul; only the recurrence
runs in a Python loop, which keeps single-core training tolerable.
"""
from __future__ import annotations

import numpy as np

from ..conditioning import FeatureSet
from ..errors import InvalidConfig
from . import activations
from .activations import sigmoid
from .network import Network, dropout_mask, uniform_init

MAX_LAYERS = 3
HIDDEN_RANGE = (20, 200)
FORGET_BIAS = 1.0


class LstmModel(Network):
    family = "lstm"

    @classmethod
    def create(cls, n_inputs: int, hidden_size: int, n_layers: int = 1, p: int = 3, activation: str = "tanh",
               dropout: float = 0.0, seed: int = 0, feature_set: FeatureSet | None = None) -> "LstmModel":
        if not 1 <= n_layers <= MAX_LAYERS:
            raise InvalidConfig(f"LSTM needs 1 to {MAX_LAYERS} layers, got {n_layers}")
        if not HIDDEN_RANGE[0] <= hidden_size <= HIDDEN_RANGE[1]:
            raise InvalidConfig(f"hidden size must lie in {HIDDEN_RANGE}, got {hidden_size}")
        if p < 1:
            raise InvalidConfig("LSTM needs p >= 1")
        if activation not in activations.LSTM_ACTIVATIONS:
            raise InvalidConfig(f"LSTM activation must be one of {activations.LSTM_ACTIVATIONS}")
        if not 0.0 <= dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)")
        H = int(hidden_size)
        arch = {"n_inputs": int(n_inputs), "n_body_inputs": int(n_inputs), "hidden_size": H,
                "n_layers": int(n_layers), "activation": activation, "dropout": float(dropout),
                "p": int(p), "adapter": None}
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        n_in = n_inputs
        for l in range(n_layers):
            params[f"body.{l}.W"] = uniform_init(rng, n_in + H, (n_in + H, 4 * H))
            b = np.zeros(4 * H)
            b[H : 2 * H] = FORGET_BIAS
            params[f"body.{l}.b"] = b
            n_in = H
        model = cls(arch, params, feature_set, meta={"seed": seed})
        model._init_head(rng)
        return model

    @property
    def hidden_size(self) -> int:
        return int(self.arch["hidden_size"])

    @property
    def rep_size(self) -> int:
        return self.hidden_size

    def body_layers(self) -> list[str]:
        return [f"body.{l}" for l in range(self.arch["n_layers"])]

    def input_weight_slices(self):
        return [("body.0.W", slice(0, self.n_body_inputs))]

    def _layer_forward(self, l: int, inp: np.ndarray):
        N, T, n_in = inp.shape
        H = self.hidden_size
        W, b = self.params[f"body.{l}.W"], self.params[f"body.{l}.b"]
        Wx, Wh = W[:n_in], W[n_in:]
        XW = (inp.reshape(N * T, n_in) @ Wx).reshape(N, T, 4 * H) + b
        act = self._act
        A = np.empty((N, T, 4 * H))  # pre-activations
        G = np.empty((N, T, 4 * H))  # gate values
        C = np.empty((N, T + 1, H))  # cell states, C[:, 0] = 0
        AC = np.empty((N, T, H))  # act(c_t)
        Hs = np.empty((N, T + 1, H))  # hidden states, Hs[:, 0] = 0
        C[:, 0] = 0.0
        Hs[:, 0] = 0.0
        for t in range(T):
            a = XW[:, t] + Hs[:, t] @ Wh
            A[:, t] = a
            g = G[:, t]
            g[:, : 3 * H] = sigmoid(a[:, : 3 * H])
            g[:, 3 * H :] = act(a[:, 3 * H :])
            C[:, t + 1] = g[:, H : 2 * H] * C[:, t] + g[:, :H] * g[:, 3 * H :]
            AC[:, t] = act(C[:, t + 1])
            Hs[:, t + 1] = g[:, 2 * H : 3 * H] * AC[:, t]
        return Hs[:, 1:], (inp, A, G, C, AC, Hs)

    def _body_forward(self, x, train, rng):
        rate = self.dropout
        caches = []
        inp = x
        for l in range(self.arch["n_layers"]):
            out, cache = self._layer_forward(l, inp)
            if train and rate > 0:
                # between layers the whole sequence is masked; the last layer only feeds its final step to the head
                mask = dropout_mask(rng, out.shape if l < self.arch["n_layers"] - 1 else out[:, -1].shape, rate)
            else:
                mask = None
            caches.append((cache, mask))
            if l < self.arch["n_layers"] - 1:
                inp = out * mask if mask is not None else out
            else:
                rep = out[:, -1] * mask if mask is not None else out[:, -1]
        return rep, caches

    def _layer_backward(self, l: int, cache, dHs: np.ndarray, grads) -> np.ndarray:
        inp, A, G, C, AC, Hs = cache
        N, T, n_in = inp.shape
        H = self.hidden_size
        W = self.params[f"body.{l}.W"]
        Wx, Wh = W[:n_in], W[n_in:]
        act_grad = self._act_grad
        dA = np.empty((N, T, 4 * H))
        dh_next = np.zeros((N, H))
        dc_next = np.zeros((N, H))
        for t in reversed(range(T)):
            g = G[:, t]
            gi, gf, go, gg = g[:, :H], g[:, H : 2 * H], g[:, 2 * H : 3 * H], g[:, 3 * H :]
            dh = dHs[:, t] + dh_next
            dc = dh * go * act_grad(C[:, t + 1], AC[:, t]) + dc_next
            da = dA[:, t]
            da[:, :H] = dc * gg * gi * (1.0 - gi)
            da[:, H : 2 * H] = dc * C[:, t] * gf * (1.0 - gf)
            da[:, 2 * H : 3 * H] = dh * AC[:, t] * go * (1.0 - go)
            da[:, 3 * H :] = dc * gi * act_grad(A[:, t, 3 * H :], gg)
            dc_next = dc * gf
            dh_next = da @ Wh.T
        dA_flat = dA.reshape(N * T, 4 * H)
        dWx = inp.reshape(N * T, n_in).T @ dA_flat
        dWh = Hs[:, :-1].reshape(N * T, H).T @ dA_flat
        grads[f"body.{l}.W"] = np.concatenate([dWx, dWh], axis=0)
        grads[f"body.{l}.b"] = dA_flat.sum(axis=0)
        return (dA_flat @ Wx.T).reshape(N, T, n_in)

    def _body_backward(self, caches, drep, grads):
        n_layers = self.arch["n_layers"]
        cache, mask = caches[-1]
        N, T = cache[0].shape[:2]
        dHs = np.zeros((N, T, self.hidden_size))
        dHs[:, -1] = drep * mask if mask is not None else drep
        for l in reversed(range(n_layers)):
            cache, _ = caches[l]
            dinp = self._layer_backward(l, cache, dHs, grads)
            if l:
                prev_mask = caches[l - 1][1]
                dHs = dinp * prev_mask if prev_mask is not None else dinp
