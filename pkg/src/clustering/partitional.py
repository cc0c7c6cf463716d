"""
Partitional Base Clusterers

K-means (Lloyd), PAM (k-medoids BUILD + SWAP) and Fuzzy C-means, the base
clusterers that feed the consensus ensemble. Each ``fit_*`` function returns a
fit object holding the model (centers or medoids), its convergence history and
a ``predict`` method for unseen points; the plain functions return the
partition only.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import cdist

from core.dataset import Dataset, FuzzyPartition, Partition
from utils.errors import DataError
from utils.logger import get_logger

from .fuzzy import ExponentMode, centers_update, fcm_objective, membership_update

logger = get_logger(__name__)


def _check_count(data: Dataset, k: int, name: str = "k"):
    if k < 1:
        raise DataError(f"{name} must be at least 1, got {k}")
    if k > data.n:
        raise DataError(f"{name}={k} exceeds the number of points ({data.n})")


def nearest_center(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per point (Euclidean, ties to the lowest index)."""
    return np.argmin(cdist(np.atleast_2d(points), centers, 'sqeuclidean'), axis=1)


def fill_empty_clusters(labels: np.ndarray, k: int, spread: np.ndarray) -> np.ndarray:
    """
    Give every empty cluster one point.

    For each empty cluster (ascending), the point with the largest ``spread``
    (distance to its own center, or 1 - membership) among clusters holding
    more than one point moves to it.
    """
    labels = labels.copy()
    spread = np.array(spread, dtype=np.float64)
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        candidates = np.where(donors, spread, -np.inf)
        moved = int(np.argmax(candidates))
        counts[labels[moved]] -= 1
        labels[moved] = empty
        counts[empty] = 1
        spread[moved] = -np.inf
    return labels


@dataclass(frozen=True)
class KMeansFit:
    """Converged K-means model."""
    partition: Partition
    centers: np.ndarray
    inertia_history: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def predict(self, points: np.ndarray) -> np.ndarray:
        return nearest_center(points, self.centers)


def _kmeans_assign(points: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    sq = cdist(points, centers, 'sqeuclidean')
    labels = np.argmin(sq, axis=1)
    if np.bincount(labels, minlength=k).min() == 0:
        spread = sq[np.arange(points.shape[0]), labels]
        labels = fill_empty_clusters(labels, k, spread)
    return labels


def _lloyd(x: np.ndarray, centers: np.ndarray, k: int, max_iter: int, tol: float) -> KMeansFit:
    history: List[float] = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels = _kmeans_assign(x, centers, k)
        new_centers = np.vstack([x[labels == j].mean(axis=0) for j in range(k)])
        history.append(float(np.sum((x - new_centers[labels]) ** 2)))
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            converged = True
            break

    labels = _kmeans_assign(x, centers, k)
    return KMeansFit(Partition(labels, k), centers, history, n_iter, converged)


def fit_kmeans(data: Dataset, k: int, seed: int = 0, max_iter: int = 300,
               tol: float = 1e-6, n_init: int = 10) -> KMeansFit:
    """
    Lloyd's K-means from k distinct rows drawn by a seeded generator.

    Iterates until the largest center shift drops below ``tol`` or
    ``max_iter`` updates; empty clusters are re-seeded from the farthest
    point of a multi-point cluster. ``n_init`` draws from the same generator
    are run and the lowest final inertia wins (first on ties).
    """
    _check_count(data, k)
    if tol <= 0:
        raise DataError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise DataError(f"max_iter must be at least 1, got {max_iter}")
    if n_init < 1:
        raise DataError(f"n_init must be at least 1, got {n_init}")

    x = data.points
    rng = np.random.default_rng(seed)
    best: Optional[KMeansFit] = None
    best_inertia = np.inf
    for _ in range(n_init):
        start = x[np.sort(rng.choice(data.n, size=k, replace=False))].copy()
        fit = _lloyd(x, start, k, max_iter, tol)
        inertia = float(np.sum((x - fit.centers[fit.partition.assignment]) ** 2))
        if inertia < best_inertia:
            best, best_inertia = fit, inertia

    logger.debug(f"kmeans k={k} seed={seed}: best of {n_init} starts, inertia={best_inertia:.4f}, "
                 f"{best.n_iter} iterations, converged={best.converged}")
    return best


def kmeans(data: Dataset, k: int, seed: int = 0, max_iter: int = 300,
           tol: float = 1e-6, n_init: int = 10) -> Partition:
    """K-means partition; see ``fit_kmeans``."""
    return fit_kmeans(data, k, seed, max_iter, tol, n_init).partition


@dataclass(frozen=True)
class PamFit:
    """Converged k-medoids model."""
    partition: Partition
    medoids: np.ndarray  # row indices into the fitted dataset
    medoid_points: np.ndarray
    cost_history: List[float] = field(default_factory=list)
    n_swaps: int = 0

    @property
    def cost(self) -> float:
        return self.cost_history[-1]

    def predict(self, points: np.ndarray) -> np.ndarray:
        return nearest_center(points, self.medoid_points)


def _pam_labels(dist: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    labels = np.argmin(dist[:, medoids], axis=1)
    labels[medoids] = np.arange(medoids.size)
    return labels


def _pam_cost(dist: np.ndarray, medoids: np.ndarray) -> float:
    return float(dist[np.arange(dist.shape[0]), medoids[_pam_labels(dist, medoids)]].sum())


def fit_pam(data: Dataset, k: int, seed: int = 0, max_iter: int = 100) -> PamFit:
    """
    Partitioning Around Medoids.

    BUILD greedily adds the medoid that lowers total Euclidean dissimilarity
    most (candidates scanned in a seeded order, first best wins); SWAP then
    applies the best medoid/non-medoid exchange while it strictly lowers the
    total, for at most ``max_iter`` swaps.
    """
    _check_count(data, k)
    dist = cdist(data.points, data.points, 'euclidean')
    n = data.n
    order = np.random.default_rng(seed).permutation(n)

    # BUILD
    medoids: List[int] = []
    nearest = np.full(n, np.inf)
    for _ in range(k):
        best, best_cost = -1, np.inf
        for h in order:
            if h in medoids:
                continue
            cost = float(np.minimum(nearest, dist[:, h]).sum())
            if cost < best_cost:
                best, best_cost = int(h), cost
        medoids.append(best)
        nearest = np.minimum(nearest, dist[:, best])

    current = np.array(medoids, dtype=np.int64)
    history = [_pam_cost(dist, current)]

    # SWAP
    swaps = 0
    while swaps < max_iter:
        best_cost, best_swap = history[-1], None
        for i in range(k):
            others = np.delete(current, i)
            base = dist[:, others].min(axis=1) if others.size else np.full(n, np.inf)
            # total cost for every candidate replacement h at once
            totals = np.minimum(base[:, None], dist).sum(axis=0)
            totals[current] = np.inf
            h = int(np.argmin(totals))
            if totals[h] < best_cost - 1e-12:
                best_cost, best_swap = float(totals[h]), (i, h)
        if best_swap is None:
            break
        current[best_swap[0]] = best_swap[1]
        history.append(_pam_cost(dist, current))
        swaps += 1

    labels = _pam_labels(dist, current)
    logger.debug(f"pam k={k} seed={seed}: {swaps} swaps, cost={history[-1]:.4f}")
    return PamFit(Partition(labels, k), current.copy(), data.points[current].copy(), history, swaps)


def pam(data: Dataset, k: int, seed: int = 0, max_iter: int = 100) -> Partition:
    """PAM partition; see ``fit_pam``."""
    return fit_pam(data, k, seed, max_iter).partition


@dataclass(frozen=True)
class FcmFit:
    """Converged Fuzzy C-means model."""
    memberships: FuzzyPartition
    centers: np.ndarray
    m: float
    objective_history: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def harden(self) -> Partition:
        return harden(self.memberships, self.memberships.c)

    @property
    def partition(self) -> Partition:
        return self.harden()

    def predict(self, points: np.ndarray) -> np.ndarray:
        # argmax membership is the nearest center for any m > 1
        return nearest_center(points, self.centers)


def fit_fuzzy_cmeans(data: Dataset, c: int, m: float = 2.0, tol: float = 1e-6, seed: int = 0,
                     max_iter: int = 300,
                     init_memberships: Optional[FuzzyPartition] = None) -> FcmFit:
    """
    Fuzzy C-means with Euclidean distance.

    Starts from seeded random memberships (or ``init_memberships``) and
    alternates center and membership updates until the largest membership
    change is at most ``tol`` or ``max_iter`` sweeps.
    """
    _check_count(data, c, "c")
    if m <= 1.0:
        raise DataError(f"weighting exponent must exceed 1, got {m}")
    if tol <= 0:
        raise DataError(f"tol must be positive, got {tol}")

    if init_memberships is None:
        raw = np.random.default_rng(seed).random((c, data.n))
        u = FuzzyPartition(raw / raw.sum(axis=0, keepdims=True))
    else:
        if init_memberships.memberships.shape != (c, data.n):
            raise DataError("initial memberships do not match (c, N)")
        u = init_memberships

    centers: Optional[np.ndarray] = None
    history: List[float] = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centers = centers_update(data, u, m, previous=centers)
        sq = cdist(centers, data.points, 'sqeuclidean')
        new_u = membership_update(np.sqrt(sq), m, ExponentMode.STANDARD)
        history.append(fcm_objective(sq, new_u, m))
        delta = float(np.max(np.abs(new_u.memberships - u.memberships)))
        u = new_u
        if delta <= tol:
            converged = True
            break

    centers = centers_update(data, u, m, previous=centers)
    logger.debug(f"fuzzy_cmeans c={c} m={m} seed={seed}: {n_iter} sweeps, converged={converged}")
    return FcmFit(u, centers, m, history, n_iter, converged)


def fuzzy_cmeans(data: Dataset, c: int, m: float = 2.0, tol: float = 1e-6, seed: int = 0,
                 max_iter: int = 300) -> FuzzyPartition:
    """Converged membership matrix; see ``fit_fuzzy_cmeans``."""
    return fit_fuzzy_cmeans(data, c, m, tol, seed, max_iter).memberships


def harden(u: FuzzyPartition, k: Optional[int] = None) -> Partition:
    """
    Crisp partition by per-point argmax membership (ties to the lowest index).

    With ``k`` given, clusters left empty by the argmax are refilled from the
    least-committed points of multi-point clusters so the result has exactly
    ``k`` clusters; without it, the labels are compacted.
    """
    labels = u.argmax()
    if k is None:
        return Partition.from_labels(labels)[0]
    if k > u.n:
        raise DataError(f"cannot harden {u.n} points into {k} clusters")
    if np.bincount(labels, minlength=k).min() == 0:
        logger.warning("argmax left empty clusters; reassigning least-committed points")
        spread = 1.0 - u.memberships[labels, np.arange(u.n)]
        labels = fill_empty_clusters(labels, k, spread)
    return Partition(labels, k)
