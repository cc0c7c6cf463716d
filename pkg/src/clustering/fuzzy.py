"""
Fuzzy Partition Updates

Membership and center updates shared by Fuzzy C-means and SOFT-DBSCAN.
"""

from enum import Enum
from typing import Optional

import numpy as np

from core.dataset import Dataset, FuzzyPartition
from utils.errors import DataError


class ExponentMode(Enum):
    """Distance-ratio exponent used by the membership update."""
    STANDARD = "standard"  # 2 / (m - 1)
    LITERAL = "literal"    # m / (m - 1)

    def power(self, m: float) -> float:
        if self is ExponentMode.LITERAL:
            return m / (m - 1.0)
        return 2.0 / (m - 1.0)


def membership_update(distances: np.ndarray, m: float,
                      mode: ExponentMode = ExponentMode.STANDARD) -> FuzzyPartition:
    """
    Fuzzy memberships from a c x n distance matrix.

    mu_ik = 1 / sum_j (d_ik / d_jk)^p. A column holding a zero distance puts
    full membership on its lowest zero-distance cluster.

    Args:
        distances: Non-negative finite c x n distances
        m: Weighting exponent (> 1)
        mode: Exponent convention

    Returns:
        FuzzyPartition with unit column sums
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.size == 0:
        raise DataError("distances must be a non-empty c x n matrix")
    if not np.all(np.isfinite(d)) or d.min() < 0.0:
        raise DataError("distances must be finite and non-negative")
    if m <= 1.0:
        raise DataError(f"weighting exponent must exceed 1, got {m}")

    p = mode.power(m)
    zero = d == 0.0
    singular = zero.any(axis=0)

    # log-domain normalisation: mu_ik = d_ik^-p / sum_j d_jk^-p
    log_inv = -p * np.log(np.where(zero, 1.0, d))
    log_inv -= log_inv.max(axis=0, keepdims=True)
    weights = np.exp(log_inv)
    u = weights / weights.sum(axis=0, keepdims=True)

    if singular.any():
        cols = np.flatnonzero(singular)
        first_zero = np.argmax(zero[:, cols], axis=0)
        u[:, cols] = 0.0
        u[first_zero, cols] = 1.0

    return FuzzyPartition(u)


def centers_update(data: Dataset, u: FuzzyPartition, m: float,
                   previous: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Membership-weighted cluster centers v_i = sum_k mu_ik^m x_k / sum_k mu_ik^m.

    A cluster with zero membership mass keeps its previous center.
    """
    if u.n != data.n:
        raise DataError(f"memberships cover {u.n} points, dataset has {data.n}")
    if m <= 1.0:
        raise DataError(f"weighting exponent must exceed 1, got {m}")

    w = u.memberships ** m
    mass = w.sum(axis=1)
    empty = mass <= 0.0
    centers = (w @ data.points) / np.where(empty, 1.0, mass)[:, None]

    if empty.any():
        if previous is None or previous.shape != centers.shape:
            raise DataError("cluster without membership mass and no previous center")
        centers[empty] = previous[empty]
    return centers


def fcm_objective(sq_distances: np.ndarray, u: FuzzyPartition, m: float) -> float:
    """Fuzzy C-means objective sum_i sum_k mu_ik^m d_ik^2."""
    return float(np.sum((u.memberships ** m) * sq_distances))
