"""
SOFT-DBSCAN Database Maintenance

DBSCAN seeds a fuzzy partition with one cluster per dense region plus one
singleton cluster per noise point (c = k + x). Memberships and centers are
then iterated with Mahalanobis distances until the partition settles; points
whose strongest membership lands on a noise-seeded cluster are flagged
noisy. ``maintain`` drops those points and same-cluster near-duplicates to
produce the reduced dataset the consensus stage learns from.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from core.dataset import Dataset, FuzzyPartition
from utils.errors import ConfigError, DataError
from utils.logger import RunLogger, get_logger

from .density import dbscan
from .fuzzy import ExponentMode, centers_update, membership_update

logger = get_logger(__name__)


class CovarianceMode(Enum):
    """Metric used for the membership distances."""
    FUZZY = "fuzzy"        # per-cluster fuzzy covariance (Mahalanobis)
    IDENTITY = "identity"  # Euclidean


@dataclass(frozen=True)
class SoftDbscanConfig:
    """Parameters of the DBSCAN seeding and the fuzzy refinement loop."""
    eps: float = 1.0
    min_pts: int = 4
    m: float = 2.5
    xi: float = 1e-4
    max_iter: int = 300
    exponent_mode: ExponentMode = ExponentMode.STANDARD
    cov_reg: Optional[float] = None
    covariance: CovarianceMode = CovarianceMode.FUZZY

    def __post_init__(self):
        if not self.eps > 0:
            raise DataError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise DataError(f"min_pts must be at least 1, got {self.min_pts}")
        if not self.m > 1.0:
            raise DataError(f"weighting exponent must exceed 1, got {self.m}")
        if not self.xi > 0:
            raise DataError(f"tolerance xi must be positive, got {self.xi}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.cov_reg is not None and self.cov_reg < 0:
            raise DataError(f"cov_reg must be non-negative, got {self.cov_reg}")
        if self.m <= 2.0:
            logger.warning(f"m={self.m} is below the recommended m > 2")

    @classmethod
    def from_config(cls, config, section: str = 'maintenance') -> 'SoftDbscanConfig':
        """Build from a Config section."""
        try:
            exponent_mode = ExponentMode(config.get(f'{section}.exponent_mode', 'standard'))
            covariance = CovarianceMode(config.get(f'{section}.covariance', 'fuzzy'))
        except ValueError as e:
            raise ConfigError(f"{section}: {e}") from e
        return cls(
            eps=float(config.get(f'{section}.eps', 1.0)),
            min_pts=int(config.get(f'{section}.min_pts', 4)),
            m=float(config.get(f'{section}.m', 2.5)),
            xi=float(config.get(f'{section}.xi', 1e-4)),
            max_iter=int(config.get(f'{section}.max_iter', 300)),
            exponent_mode=exponent_mode,
            cov_reg=config.get(f'{section}.cov_reg'),
            covariance=covariance,
        )

    def regularizer(self, data: Dataset) -> float:
        """Ridge added to every cluster covariance; defaults to 1e-6 * trace / M."""
        if self.cov_reg is not None:
            return float(self.cov_reg)
        trace = float(np.trace(np.atleast_2d(np.cov(data.points, rowvar=False, bias=True))))
        return 1e-6 * trace / data.m if trace > 0 else 1e-6


@dataclass(frozen=True)
class SoftDbscanOutput:
    """Converged fuzzy partition plus the noise flags it implies."""
    memberships: FuzzyPartition
    centers: np.ndarray
    noise_seeded: FrozenSet[int]
    noisy_points: Tuple[int, ...]
    iterations: int
    dbscan_clusters: int
    dbscan_noise: int
    converged: bool = False

    @property
    def c(self) -> int:
        return self.memberships.c

    def argmax(self) -> np.ndarray:
        return self.memberships.argmax()


@dataclass(frozen=True)
class MaintainedDataset:
    """Reduced dataset and the fate of every original row."""
    reduced: Dataset
    kept: Tuple[int, ...]
    removed_noisy: Tuple[int, ...]
    removed_redundant: Tuple[int, ...]
    clustering: Optional[SoftDbscanOutput] = None

    def __post_init__(self):
        total = len(self.kept) + len(self.removed_noisy) + len(self.removed_redundant)
        union = set(self.kept) | set(self.removed_noisy) | set(self.removed_redundant)
        if len(union) != total:
            raise DataError("kept, noisy and redundant index sets overlap")
        if self.reduced.n != len(self.kept):
            raise DataError("reduced dataset size differs from the kept set")

    @property
    def n_original(self) -> int:
        return len(self.kept) + len(self.removed_noisy) + len(self.removed_redundant)


def mahalanobis(x: np.ndarray, v: np.ndarray, cov_inverse: np.ndarray) -> float:
    """sqrt((x - v)^T S^-1 (x - v)) for a symmetric positive definite S^-1."""
    s = np.asarray(cov_inverse, dtype=np.float64)
    diff = np.asarray(x, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    if s.ndim != 2 or s.shape != (diff.size, diff.size):
        raise DataError(f"inverse covariance must be {diff.size}x{diff.size}")
    if not np.all(np.isfinite(s)):
        raise DataError("inverse covariance contains non-finite values")
    if not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
        raise DataError("inverse covariance must be symmetric")
    return float(np.sqrt(max(float(diff @ s @ diff), 0.0)))


def mahalanobis_distances(points: np.ndarray, centers: np.ndarray,
                          cov_inverses: np.ndarray) -> np.ndarray:
    """c x n matrix of Mahalanobis distances from every point to every center."""
    c = centers.shape[0]
    d = np.empty((c, points.shape[0]))
    for i in range(c):
        diff = points - centers[i]
        quad = np.einsum('nj,jk,nk->n', diff, cov_inverses[i], diff)
        d[i] = np.sqrt(np.maximum(quad, 0.0))
    return d


def fuzzy_covariance(data: Dataset, u: FuzzyPartition, centers: np.ndarray, m: float,
                     cov_reg: float) -> np.ndarray:
    """
    Inverse fuzzy covariance per cluster.

    Sigma_i = sum_k mu_ik^m (x_k - v_i)(x_k - v_i)^T / sum_k mu_ik^m, plus
    cov_reg * I before inversion.

    Returns:
        c x M x M stack of inverse covariance matrices
    """
    if u.n != data.n or centers.shape != (u.c, data.m):
        raise DataError("memberships, centers and data shapes are inconsistent")
    if cov_reg < 0:
        raise DataError(f"cov_reg must be non-negative, got {cov_reg}")

    w = u.memberships ** m
    inverses = np.empty((u.c, data.m, data.m))
    ridge = cov_reg * np.eye(data.m)
    for i in range(u.c):
        mass = w[i].sum()
        diff = data.points - centers[i]
        scatter = (diff * w[i][:, None]).T @ diff / mass if mass > 0 else np.zeros((data.m, data.m))
        sigma = 0.5 * (scatter + scatter.T) + ridge
        try:
            inv = np.linalg.inv(sigma)
        except np.linalg.LinAlgError as e:
            raise DataError(f"singular covariance for cluster {i}; raise cov_reg") from e
        if not np.all(np.isfinite(inv)) or np.linalg.matrix_rank(sigma) < data.m:
            raise DataError(f"singular covariance for cluster {i}; raise cov_reg")
        inverses[i] = 0.5 * (inv + inv.T)
    return inverses


def soft_dbscan(data: Dataset, cfg: SoftDbscanConfig,
                run_logger: Optional[RunLogger] = None) -> SoftDbscanOutput:
    """
    Run SOFT-DBSCAN.

    DBSCAN finds k clusters and x noise points; the fuzzy partition starts
    crisp with c = k + x clusters (each noise point its own singleton with
    the point as initial center) and iterates distances, memberships and
    centers until the largest membership change is at most ``xi``.

    Args:
        data: Points to clean
        cfg: Seeding and refinement parameters
        run_logger: Optional event logger

    Returns:
        SoftDbscanOutput with the converged partition and noisy point ids
    """
    seed = dbscan(data, cfg.eps, cfg.min_pts)
    k, x = seed.k, seed.x
    c = k + x
    if c == 0:
        raise DataError("DBSCAN produced neither clusters nor noise")
    if c > data.n:
        logger.warning(f"c={c} exceeds N={data.n}")

    crisp = np.zeros((c, data.n))
    for j in range(k):
        crisp[j, seed.members(j)] = 1.0
    for offset, point in enumerate(seed.noise_ids):
        crisp[k + offset, point] = 1.0
    u = FuzzyPartition(crisp)
    noise_seeded = frozenset(range(k, c))

    reg = cfg.regularizer(data)
    centers = centers_update(data, u, cfg.m)
    identity = np.broadcast_to(np.eye(data.m), (c, data.m, data.m))

    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        if cfg.covariance is CovarianceMode.FUZZY:
            inverses = fuzzy_covariance(data, u, centers, cfg.m, reg)
        else:
            inverses = identity
        distances = mahalanobis_distances(data.points, centers, inverses)
        new_u = membership_update(distances, cfg.m, cfg.exponent_mode)
        centers = centers_update(data, new_u, cfg.m, previous=centers)
        delta = float(np.max(np.abs(new_u.memberships - u.memberships)))
        u = new_u
        if delta <= cfg.xi:
            converged = True
            break

    winners = u.argmax()
    noisy = tuple(int(i) for i in np.flatnonzero(winners >= k))
    if run_logger is not None:
        run_logger.log_convergence("soft_dbscan", iterations, converged)
    logger.info(f"soft_dbscan: k={k}, x={x}, c={c}, {iterations} iterations, "
                f"{len(noisy)} noisy points")
    return SoftDbscanOutput(u, centers, noise_seeded, noisy, iterations, k, x, converged)


def maintain(data: Dataset, cfg: SoftDbscanConfig, dedup_radius: float = 0.0,
             run_logger: Optional[RunLogger] = None) -> MaintainedDataset:
    """
    Remove noisy and redundant instances.

    Noisy points are those SOFT-DBSCAN flags. Then, scanning in index order,
    a point within ``dedup_radius`` of an already kept point of the same
    argmax cluster is redundant. The reduced dataset keeps original order.
    """
    if dedup_radius < 0:
        raise DataError(f"dedup_radius must be non-negative, got {dedup_radius}")

    result = soft_dbscan(data, cfg, run_logger)
    noisy = set(result.noisy_points)
    winners = result.argmax()

    kept: List[int] = []
    redundant: List[int] = []
    kept_by_cluster: Dict[int, List[int]] = {}
    for i in range(data.n):
        if i in noisy:
            continue
        cluster = int(winners[i])
        peers = kept_by_cluster.setdefault(cluster, [])
        if peers:
            gaps = np.linalg.norm(data.points[peers] - data.points[i], axis=1)
            if gaps.min() <= dedup_radius:
                redundant.append(i)
                continue
        peers.append(i)
        kept.append(i)

    if not kept:
        raise DataError("maintenance removed all points")

    if run_logger is not None:
        run_logger.log_maintenance(data.n, len(noisy), len(redundant))
    logger.info(f"maintain: kept {len(kept)} of {data.n} "
                f"({len(noisy)} noisy, {len(redundant)} redundant)")
    return MaintainedDataset(
        reduced=data.subset(kept),
        kept=tuple(kept),
        removed_noisy=tuple(sorted(noisy)),
        removed_redundant=tuple(redundant),
        clustering=result,
    )
