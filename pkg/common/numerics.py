"""
Scalar and vector primitives shared by the loss, analysis and training code.

Everything here works in 64-bit floating point and holds no state, so the functions can be
called from any number of worker threads.
"""

import numpy as np
from scipy.special import logsumexp

from common.errors import LabError

NORM_FLOOR = 1e-12
UNIT_NORM_TOLERANCE = 1e-9


class ZeroVector(LabError, ValueError):
    pass


class DimensionMismatch(LabError, ValueError):
    pass


class EmptyInput(LabError, ValueError):
    pass


class NonFiniteValue(LabError, ValueError):
    pass


def as_vector(values) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteValue("vector contains NaN or Inf entries")
    return vector


def l2_normalize(v) -> np.ndarray:
    """Return v / ||v||. Raises ZeroVector when ||v|| <= 1e-12."""
    vector = as_vector(v)
    norm = float(np.linalg.norm(vector))
    if norm <= NORM_FLOOR:
        raise ZeroVector(f"cannot normalize a vector with norm {norm:.3e}")
    return vector / norm


def l2_normalize_rows(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise normalisation. Returns (unit rows, row norms); raises ZeroVector on any degenerate row."""
    rows = np.asarray(matrix, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {rows.shape}")
    norms = np.linalg.norm(rows, axis=1)
    degenerate = np.flatnonzero(norms <= NORM_FLOOR)
    if degenerate.size:
        raise ZeroVector(f"rows {degenerate.tolist()} have norm <= {NORM_FLOOR}")
    return rows / norms[:, None], norms


def dot(a, b) -> float:
    first = as_vector(a)
    second = as_vector(b)
    if first.shape != second.shape:
        raise DimensionMismatch(f"dimension mismatch: {first.shape[0]} vs {second.shape[0]}")
    return float(np.dot(first, second))


def log_sum_exp(xs) -> float:
    """log(sum(exp(xs))) with a max shift; safe for |x| up to 1e6."""
    values = np.asarray(xs, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("log_sum_exp needs at least one value")
    return float(logsumexp(values))


def masked_log_sum_exp(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Row-wise log-sum-exp over the entries selected by `mask`.

    Rows with no selected entry come back as -inf; callers are expected to drop them.
    """
    shifted = np.where(mask, values, -np.inf)
    out = np.full(values.shape[0], -np.inf)
    populated = mask.any(axis=1)
    if populated.any():
        out[populated] = logsumexp(shifted[populated], axis=1)
    return out


def relative_error(analytic, reference) -> float:
    """||a - b|| / max(||a||, ||b||, 1); the unit floor keeps near-zero gradients from blowing up the ratio."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(reference, dtype=np.float64).ravel()
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1.0)
    return float(np.linalg.norm(a - b)) / scale


def central_difference(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function over every coordinate of x."""
    x0 = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    grad_flat = grad.reshape(-1)
    for j in range(flat.size):
        original = flat[j]
        flat[j] = original + h
        f_plus = func(x0)
        flat[j] = original - h
        f_minus = func(x0)
        flat[j] = original
        grad_flat[j] = (f_plus - f_minus) / (2 * h)
    return grad
