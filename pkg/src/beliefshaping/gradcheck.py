"""Central finite differences, the oracle for every hand-derived gradient."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .params import ParamVector


def finite_diff_grad(f, params: ParamVector, step: float = 1e-6, coords=None) -> ParamVector:
    """Central-difference gradient of a scalar function of a ParamVector.

    (f(p + s e_i) - f(p - s e_i)) / 2s per coordinate. f must be pure; a
    non-finite value raises NumericError carrying the offending coordinate.
    `coords` restricts the probe to a subset of flat indices (the rest stay 0).
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    grad = params.zeros_like()
    work = params.copy()
    indices = range(work.size) if coords is None else np.asarray(coords, dtype=np.int64)
    for i in indices:
        orig = work.data[i]
        work.data[i] = orig + step
        f_plus = float(f(work))
        work.data[i] = orig - step
        f_minus = float(f(work))
        work.data[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        grad.data[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def finite_diff_grad_array(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Same as finite_diff_grad but for a plain ndarray argument."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(f(x))
        flat[i] = orig - step
        f_minus = float(f(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Worst per-coordinate relative error between two gradients.

    Coordinates are compared against max(|a_i|, |r_i|) with a floor at 1e-3 of
    the overall gradient scale, so exact-zero coordinates are judged against
    finite-difference noise rather than against themselves.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    r = np.asarray(reference, dtype=np.float64).reshape(-1)
    if a.shape != r.shape:
        raise ValueError("gradient shapes disagree")
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(r), initial=0.0)))
    if scale < 1e-8:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(r)), 1e-3 * scale)
    return float(np.max(np.abs(a - r) / denom))
