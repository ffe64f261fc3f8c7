"""Training losses and their gradients with respect to the predictions.

SMAPE is the fraction form (no factor 100) and expects pressures, not
scaled values; the training loop de-normalizes before calling it.
"""
import numpy as np

from ..errors import DomainError, LengthMismatch

LOSSES = ("mse", "mae", "smape")


def _check(y_pred, y_true):
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_pred.shape != y_true.shape:
        raise LengthMismatch(f"{y_pred.shape} vs {y_true.shape}")
    if y_pred.size == 0:
        raise LengthMismatch("empty input")
    return y_pred, y_true


def loss(kind: str, y_pred, y_true) -> float:
    y_pred, y_true = _check(y_pred, y_true)
    d = y_pred - y_true
    kind = kind.lower()
    if kind == "mse":
        return float(np.mean(d * d))
    if kind == "mae":
        return float(np.mean(np.abs(d)))
    if kind == "smape":
        s = y_pred + y_true
        if np.any(s == 0):
            raise DomainError("SMAPE denominator is zero")
        return float(np.mean(2.0 * np.abs(d) / s))
    raise ValueError(f"unknown loss {kind!r}")


def loss_grad(kind: str, y_pred, y_true) -> np.ndarray:
    """d loss / d y_pred, elementwise (already divided by n)."""
    y_pred, y_true = _check(y_pred, y_true)
    n = y_pred.size
    d = y_pred - y_true
    kind = kind.lower()
    if kind == "mse":
        return 2.0 * d / n
    if kind == "mae":
        return np.sign(d) / n
    if kind == "smape":
        s = y_pred + y_true
        if np.any(s == 0):
            raise DomainError("SMAPE denominator is zero")
        return 2.0 * (np.sign(d) * s - np.abs(d)) / (s * s) / n
    raise ValueError(f"unknown loss {kind!r}")
