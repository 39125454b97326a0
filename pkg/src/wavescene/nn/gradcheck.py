"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        up = f(x)
        x[idx] = orig - eps
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2.0 * eps)
        it.iternext()
    return grad


def gradient_check(op, x: np.ndarray, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and numeric gradients.

    ``op(x)`` must return (scalar loss, gradient w.r.t. x).  The relative
    error per entry is |a - n| / max(|a|, |n|, 1); the unit floor keeps
    near-zero gradient entries comparable on an absolute scale.
    """
    x = np.array(x, dtype=np.float64)
    _, analytic = op(x)
    analytic = np.array(analytic, dtype=np.float64, copy=True)
    numeric = numeric_gradient(lambda v: op(v)[0], x, eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())
