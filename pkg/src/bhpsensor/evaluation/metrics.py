"""Error metrics on de-normalized pressures.

Percentages use the measured value in the denominator.  nRMSE is RMSE
divided by the mean measured pressure, in percent.
"""
from __future__ import annotations

import numpy as np

from ..errors import DomainError, LengthMismatch

METRICS = ("mape", "smape", "rmse", "nrmse")


def _check(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {actual.size} actuals")
    if pred.size == 0:
        raise LengthMismatch("empty input")
    return pred, actual


def mape(pred, actual) -> float:
    pred, actual = _check(pred, actual)
    if np.any(actual == 0):
        raise DomainError("MAPE undefined for zero actual values")
    return float(100.0 * np.mean(np.abs(pred - actual) / np.abs(actual)))


def smape(pred, actual) -> float:
    pred, actual = _check(pred, actual)
    denom = (np.abs(pred) + np.abs(actual)) / 2.0
    if np.any(denom == 0):
        raise DomainError("SMAPE undefined where prediction and actual are both zero")
    return float(100.0 * np.mean(np.abs(pred - actual) / denom))


def rmse(pred, actual) -> float:
    pred, actual = _check(pred, actual)
    d = pred - actual
    return float(np.sqrt(np.mean(d * d)))


def nrmse(pred, actual) -> float:
    pred, actual = _check(pred, actual)
    m = float(np.mean(actual))
    if m == 0:
        raise DomainError("nRMSE undefined for zero mean actual")
    return 100.0 * rmse(pred, actual) / m


def all_metrics(pred, actual) -> dict[str, float]:
    return {"mape": mape(pred, actual), "smape": smape(pred, actual), "rmse": rmse(pred, actual),
            "nrmse": nrmse(pred, actual)}


def within_band(pred, actual, band: float) -> float:
    """Fraction of samples with ``|pred - actual| / actual <= band``."""
    pred, actual = _check(pred, actual)
    return float(np.mean(np.abs(pred - actual) / np.abs(actual) <= band))
