import numpy as np
import pytest

from activevpr import bayes
from activevpr.world import Domain, TRAIN_DOMAIN, TrajectoryWorld, WorldConfig, generate_world


def make_world(n=20, place_len=5, diag=0.9, featureless=None, **kwargs) -> TrajectoryWorld:
    """Small hand-controlled world for unit tests."""
    n_places = -(-n // place_len)
    if n_places == 1:
        confusion = np.ones((1, 1))
    else:
        off = (1 - diag) / (n_places - 1)
        confusion = np.full((n_places, n_places), off)
        np.fill_diagonal(confusion, diag)
    f = np.zeros(n) if featureless is None else np.asarray(featureless, dtype=float)
    return TrajectoryWorld(
        n_viewpoints=n, place_len_m=place_len, confusion=confusion,
        featureless=f, **kwargs,
    )


def identity_world(n=20, place_len=5, featureless=None, **kwargs) -> TrajectoryWorld:
    """Noiseless world: the classifier always reports the true place."""
    n_places = -(-n // place_len)
    return TrajectoryWorld(
        n_viewpoints=n, place_len_m=place_len, confusion=np.eye(n_places),
        featureless=np.zeros(n) if featureless is None else np.asarray(featureless, float),
        **kwargs,
    )


def transition_matrix(n: int, action_m: int, mm: bayes.MotionModel) -> np.ndarray:
    """Independent motion-model oracle: explicit row-stochastic matrix."""
    M = np.zeros((n, n))
    if mm.kind == "deterministic" or mm.sigma_m == 0:
        for v in range(n):
            M[v, min(v + action_m, n - 1)] = 1.0
        return M
    radius = max(1, int(np.ceil(3 * mm.sigma_m)))
    offsets = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (offsets / mm.sigma_m) ** 2)
    w /= w.sum()
    for v in range(n):
        for k, wk in zip(offsets, w):
            M[v, int(np.clip(v + action_m + k, 0, n - 1))] += wk
    return M


def brute_force_filter(prior, ops, mm: bayes.MotionModel):
    """Oracle for alternating updates via dense matrix algebra.

    ops: sequence of ("motion", meters) / ("perception", likelihood).
    """
    p = np.asarray(prior, dtype=float).copy()
    n = p.size
    for kind, arg in ops:
        if kind == "motion":
            p = p @ transition_matrix(n, arg, mm)
        else:
            p = p * np.asarray(arg, dtype=float)
            p = p / p.sum()
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
