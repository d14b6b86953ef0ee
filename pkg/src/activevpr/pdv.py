"""Probability-distribution-vector helpers shared by every module."""

from __future__ import annotations

import numpy as np

SUM_TOL = 1e-9


class PdvError(ValueError):
    """Raised when a vector is not a valid probability distribution."""


def as_pdv(values, *, tol: float = SUM_TOL) -> np.ndarray:
    """Validate and return a float64 copy of a probability vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise PdvError(f"PDV must be a nonempty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise PdvError("PDV contains non-finite entries")
    if np.any(v < 0):
        raise PdvError(f"PDV has negative entries (min {v.min()})")
    s = v.sum()
    if abs(s - 1.0) > tol:
        raise PdvError(f"PDV sums to {s}, expected 1 within {tol}")
    return v


def normalize(values) -> np.ndarray:
    """Rescale a nonnegative vector to sum to 1."""
    v = np.asarray(values, dtype=np.float64)
    s = v.sum()
    if s <= 0 or not np.isfinite(s):
        raise PdvError(f"cannot normalize vector with sum {s}")
    return v / s


def uniform(n: int) -> np.ndarray:
    if n <= 0:
        raise PdvError("uniform PDV needs n > 0")
    return np.full(n, 1.0 / n)


def rank_of(pdv, index: int) -> int:
    """1-based rank of `index` when entries are sorted descending.

    Ties are broken stably by position, so equal entries with a lower
    index rank first.
    """
    v = np.asarray(pdv, dtype=np.float64)
    order = np.argsort(-v, kind="stable")
    return int(np.nonzero(order == index)[0][0]) + 1
