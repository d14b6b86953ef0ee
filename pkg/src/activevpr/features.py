"""Reciprocal-rank features and the fused planner state vector.

Each PDV entry is replaced by 1/rank, where rank is its 1-based position
when the PDV is sorted descending (ties broken stably by index). The
value stays at the entry's original index, so the feature keeps saying
*which* element is ranked where.
"""

from __future__ import annotations

import numpy as np

from .pdv import as_pdv


def rrf(pdv, k: float = 0.0) -> np.ndarray:
    """Rank-indexed reciprocal-rank vector of a PDV.

    `k` is an optional smoothing constant: entries become 1/(k + rank).
    """
    p = as_pdv(pdv)
    order = np.argsort(-p, kind="stable")
    ranks = np.empty(p.size, dtype=np.float64)
    ranks[order] = np.arange(1, p.size + 1)
    return 1.0 / (k + ranks)


def fuse(ilc_pdv, olc_pdv, k: float = 0.0) -> np.ndarray:
    """DQN state vector: concat(rrf(ILC action PDV), rrf(OLC place PDV))."""
    return np.concatenate([rrf(ilc_pdv, k), rrf(olc_pdv, k)])
