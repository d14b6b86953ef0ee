"""Histogram Bayes filter over the 1-D travel-distance grid.

State is a belief PDV over viewpoint cells (1 cell = 1 m). Motion updates
shift mass forward; perception updates multiply in an observation
likelihood. Conversions between viewpoint beliefs and place-class PDVs
live here as well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .pdv import PdvError, as_pdv, normalize

log = logging.getLogger(__name__)


class DegenerateBeliefError(ValueError):
    """Perception update produced an all-zero posterior."""


@dataclass(frozen=True)
class MotionModel:
    """Forward-motion noise law for the filter's prediction step."""

    kind: str = "deterministic"  # "deterministic" | "gaussian"
    sigma_m: float = 0.0
    boundary: str = "clamp"

    def __post_init__(self):
        if self.kind not in ("deterministic", "gaussian"):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.sigma_m < 0:
            raise ValueError("sigma_m must be >= 0")
        if self.boundary != "clamp":
            raise ValueError(f"unsupported boundary {self.boundary!r}")


def _gaussian_kernel(sigma: float) -> tuple[np.ndarray, int]:
    """Discretized zero-mean Gaussian with +/-3 sigma support.

    Returns (weights, radius); weights sum to 1.
    """
    radius = max(1, int(np.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return w / w.sum(), radius


def motion_update(belief, action_m: int, mm: MotionModel | None = None) -> np.ndarray:
    """Shift belief mass forward by `action_m` cells, clamping at the end."""
    if mm is None:
        mm = MotionModel()
    if action_m <= 0:
        raise ValueError(f"action_m must be >= 1, got {action_m}")
    p = as_pdv(belief)
    n = p.size

    if mm.kind == "deterministic" or mm.sigma_m == 0:
        q = np.zeros(n)
        dst = np.minimum(np.arange(n) + action_m, n - 1)
        np.add.at(q, dst, p)
        return q

    kernel, radius = _gaussian_kernel(mm.sigma_m)
    q = np.zeros(n)
    for k, w in zip(range(-radius, radius + 1), kernel):
        dst = np.clip(np.arange(n) + action_m + k, 0, n - 1)
        np.add.at(q, dst, w * p)
    return q


def perception_update(belief, likelihood) -> np.ndarray:
    """Pointwise Bayes update: posterior ∝ prior * likelihood."""
    p = as_pdv(belief)
    lik = np.asarray(likelihood, dtype=np.float64)
    if lik.shape != p.shape:
        raise ValueError(f"likelihood shape {lik.shape} != belief shape {p.shape}")
    if np.any(lik < 0):
        raise ValueError("likelihood has negative entries")
    post = p * lik
    s = post.sum()
    if s <= 0:
        raise DegenerateBeliefError("prior and likelihood have disjoint support")
    return post / s


def perception_update_safe(belief, likelihood) -> np.ndarray:
    """Like perception_update but resets to uniform on a degenerate posterior."""
    try:
        return perception_update(belief, likelihood)
    except DegenerateBeliefError:
        log.warning("degenerate posterior; resetting belief to uniform")
        n = np.asarray(belief).size
        return np.full(n, 1.0 / n)


def viewpoint_to_place(belief, world) -> np.ndarray:
    """Marginalize a viewpoint belief into a place-class PDV."""
    p = as_pdv(belief)
    if p.size != world.n_viewpoints:
        raise ValueError(
            f"belief length {p.size} != n_viewpoints {world.n_viewpoints}"
        )
    out = np.bincount(world.place_of, weights=p, minlength=world.n_places)
    return out


def place_to_viewpoint(place_pdv, world) -> np.ndarray:
    """Spread a place PDV uniformly over each class's viewpoint cells."""
    q = as_pdv(place_pdv)
    if q.size != world.n_places:
        raise ValueError(f"place PDV length {q.size} != n_places {world.n_places}")
    counts = world.place_counts
    return q[world.place_of] / counts[world.place_of]


def lift_place_likelihood(place_pdv, world) -> np.ndarray:
    """Perception likelihood over viewpoints from a classifier place PDV."""
    return place_to_viewpoint(place_pdv, world)
