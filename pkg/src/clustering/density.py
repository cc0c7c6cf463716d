"""
Density-Based Clustering

DBSCAN over Euclidean eps-neighborhoods, used to seed SOFT-DBSCAN with its
clusters and noise points.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import DBSCAN

from core.dataset import Dataset
from utils.errors import DataError
from utils.logger import get_logger

logger = get_logger(__name__)

NOISE = -1


@dataclass(frozen=True)
class DbscanResult:
    """Cluster labels in [0, k) with NOISE marking unclustered points."""
    cluster_assignment: np.ndarray
    k: int
    noise_ids: Tuple[int, ...]

    def __post_init__(self):
        labels = np.asarray(self.cluster_assignment, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, 'cluster_assignment', labels)
        noise = tuple(int(i) for i in np.flatnonzero(labels == NOISE))
        if tuple(self.noise_ids) != noise:
            raise DataError("noise ids disagree with the NOISE labels")
        clustered = labels[labels != NOISE]
        if clustered.size and (clustered.min() < 0 or np.unique(clustered).size != self.k
                               or clustered.max() != self.k - 1):
            raise DataError("cluster labels must cover [0, k) exactly")
        if not clustered.size and self.k != 0:
            raise DataError("k must be 0 when every point is noise")

    @property
    def x(self) -> int:
        """Number of noise points."""
        return len(self.noise_ids)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_assignment == cluster)


def dbscan(data: Dataset, eps: float, min_pts: int) -> DbscanResult:
    """
    Classic DBSCAN.

    A point is core when its closed eps-ball (itself included) holds at least
    ``min_pts`` points. Clusters are numbered in order of their lowest core
    point and expanded one at a time, so a border point reachable from
    several clusters joins the first one.

    Args:
        data: Points to cluster
        eps: Neighborhood radius (> 0)
        min_pts: Core-point threshold (>= 1)

    Returns:
        DbscanResult with cluster labels and noise ids
    """
    if not eps > 0:
        raise DataError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise DataError(f"min_pts must be at least 1, got {min_pts}")

    distances = cdist(data.points, data.points, 'euclidean')
    model = DBSCAN(eps=float(eps), min_samples=int(min_pts), metric='precomputed')
    labels = model.fit(distances).labels_.astype(np.int64)

    k = int(labels.max()) + 1 if labels.size else 0
    noise = tuple(int(i) for i in np.flatnonzero(labels == NOISE))
    logger.debug(f"dbscan eps={eps} min_pts={min_pts}: {k} clusters, {len(noise)} noise points")
    return DbscanResult(labels, max(k, 0), noise)
