"""Central-difference verification of analytic gradients."""
from __future__ import annotations

import numpy as np

from .network import Network
from .ridge import RidgeModel, ridge_gradient, ridge_objective
from .train import _targets, loss_and_grads


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # per-tensor max-norm relative error; elementwise ratios blow up on near-zero entries
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_grad(f, arr: np.ndarray, epsilon: float) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + epsilon
        up = f()
        flat[i] = old - epsilon
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2.0 * epsilon)
    return out


def grad_check(model, x: np.ndarray, y: np.ndarray, loss_kind: str = "mse", epsilon: float = 1e-6,
               details: bool = False):
    """Largest relative discrepancy between analytic and numeric gradients.

    For networks ``x`` is scaled windows and ``y`` raw pressures, and the
    check runs in inference mode (no dropout).  For a ridge model the ridge
    objective itself is checked at the model's ``(w, b)``.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    errors: dict[str, float] = {}
    if isinstance(model, RidgeModel):
        X = x[:, -1, :] if x.ndim == 3 else x
        w = model.w.astype(float).copy()
        b = np.array([model.b], dtype=float)
        gw, gb = ridge_gradient(w, b[0], X, y, model.alpha)
        f = lambda: ridge_objective(w, b[0], X, y, model.alpha)  # noqa: E731
        errors["w"] = _rel_error(gw, numeric_grad(f, w, epsilon))
        errors["b"] = _rel_error(np.array([gb]), numeric_grad(f, b, epsilon))
    elif isinstance(model, Network):
        y_s = _targets(model, y)
        _, grads = loss_and_grads(model, x, y, y_s, loss_kind)
        f = lambda: loss_and_grads(model, x, y, y_s, loss_kind)[0]  # noqa: E731
        for name, arr in model.params.items():
            errors[name] = _rel_error(grads[name], numeric_grad(f, arr, epsilon))
    else:
        raise TypeError(f"cannot check {type(model).__name__}")
    worst = max(errors.values())
    return (worst, errors) if details else worst
