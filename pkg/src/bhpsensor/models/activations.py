"""Elementwise activations and their derivatives."""
import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x, y):
    return (x > 0).astype(x.dtype)


def tanh(x):
    return np.tanh(x)


def tanh_grad(x, y):
    return 1.0 - y * y


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x, y):
    return np.where(x > 0, 1.0, y + 1.0)


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x, y):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


# name -> (f, f'(x, f(x)))
ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "tanh": (tanh, tanh_grad),
    "elu": (elu, elu_grad),
    "gelu": (gelu, gelu_grad),
}
MLP_ACTIVATIONS = ("relu", "gelu", "elu", "tanh")
LSTM_ACTIVATIONS = ("relu", "tanh")


def get(name: str):
    try:
        return ACTIVATIONS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
