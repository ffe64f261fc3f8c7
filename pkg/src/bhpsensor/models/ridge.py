"""Ridge regression solved exactly through the normal equations.

Objective (bias not penalized)::

    sum_i (y_i - (w . x_i + b))**2 + alpha * sum_j w_j**2
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..conditioning import FeatureSet, ScalerParams
from ..errors import ShapeMismatch, SingularSystem


@dataclass
class RidgeModel:
    w: np.ndarray
    b: float
    alpha: float
    scaler: ScalerParams | None = None
    feature_set: FeatureSet | None = None
    meta: dict = field(default_factory=dict)

    family = "ridge"
    p = 0

    def predict_scaled(self, x: np.ndarray) -> np.ndarray:
        """Predictions for already-scaled inputs, (n, f) or windows (n, t, f)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[:, -1, :]
        if x.shape[-1] != self.w.shape[0]:
            raise ShapeMismatch(f"expected {self.w.shape[0]} features, got {x.shape[-1]}")
        return x @ self.w + self.b

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        x = self.scaler.transform(x_raw) if self.scaler is not None else x_raw
        return self.predict_scaled(x)

    def to_dict(self) -> dict:
        return {
            "family": "ridge",
            "w": self.w.tolist(),
            "b": self.b,
            "alpha": self.alpha,
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "feature_set": self.feature_set.to_dict() if self.feature_set else None,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeModel":
        return cls(
            np.array(d["w"], dtype=float),
            float(d["b"]),
            float(d["alpha"]),
            ScalerParams.from_dict(d["scaler"]) if d.get("scaler") else None,
            FeatureSet.from_dict(d["feature_set"]) if d.get("feature_set") else None,
            d.get("meta", {}),
        )


def ridge_fit(X: np.ndarray, y: np.ndarray, alpha: float) -> RidgeModel:
    """Exact minimizer of the ridge objective."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 3:
        X = X[:, -1, :]
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ShapeMismatch(f"bad shapes X={X.shape} y={y.shape}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    rhs = Xc.T @ (y - y_mean)
    if alpha == 0 and np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise SingularSystem("design matrix is rank-deficient and alpha = 0")
    try:
        w = scipy.linalg.solve(A, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    b = float(y_mean - x_mean @ w)
    return RidgeModel(w, b, float(alpha))


def ridge_objective(w, b, X, y, alpha) -> float:
    r = y - (X @ w + b)
    return float(r @ r + alpha * (w @ w))


def ridge_gradient(w, b, X, y, alpha) -> tuple[np.ndarray, float]:
    r = y - (X @ w + b)
    return -2.0 * X.T @ r + 2.0 * alpha * w, float(-2.0 * r.sum())
