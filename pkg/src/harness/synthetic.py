"""
Synthetic Data

Gaussian blobs with guaranteed center separation, optional uniform outliers
and exact duplicates. Stands in for noisy corpora so the whole experiment
suite runs without external data.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.datasets import make_blobs

from core.dataset import OUTLIER, Dataset
from utils.errors import DataError
from utils.logger import get_logger

logger = get_logger(__name__)

MAX_CENTER_ATTEMPTS = 10000


def _check_fraction(name: str, value: float):
    if not 0.0 <= value < 1.0:
        raise DataError(f"{name} must lie in [0, 1), got {value}")


def _separated_centers(k: int, dim: int, separation: float,
                       rng: np.random.Generator) -> np.ndarray:
    half_width = max(separation, 1.0) * max(k, 2)
    centers = [rng.uniform(-half_width, half_width, size=dim)]
    attempts = 0
    while len(centers) < k:
        attempts += 1
        if attempts > MAX_CENTER_ATTEMPTS:
            raise DataError(f"could not place {k} centers {separation} apart in {dim} dimensions")
        candidate = rng.uniform(-half_width, half_width, size=dim)
        if min(np.linalg.norm(candidate - c) for c in centers) >= separation:
            centers.append(candidate)
    return np.vstack(centers)


def _uniform_box(points: np.ndarray, count: int, margin: float,
                 rng: np.random.Generator) -> np.ndarray:
    lo = points.min(axis=0) - margin
    hi = points.max(axis=0) + margin
    return rng.uniform(lo, hi, size=(count, points.shape[1]))


def synth_blobs(n: int, k: int, dim: int = 2, sigma: float = 0.5, separation: float = 6.0,
                outlier_frac: float = 0.0, duplicate_frac: float = 0.0,
                seed: int = 0) -> Dataset:
    """
    Labelled Gaussian blobs.

    Of the ``n`` rows, round(n * outlier_frac) are uniform outliers in the
    blobs' bounding box widened by 3 sigma (label OUTLIER) and
    round(n * duplicate_frac) are exact copies of random inliers; the rest
    are split as evenly as possible over ``k`` blobs whose centers lie at
    least ``separation`` apart. Rows are shuffled.

    Args:
        n: Total number of rows
        k: Number of blobs
        dim: Feature dimension
        sigma: Per-axis standard deviation of every blob
        separation: Minimum pairwise center distance
        outlier_frac: Outlier share in [0, 1)
        duplicate_frac: Duplicate share in [0, 1)
        seed: Generator seed

    Returns:
        Dataset with ids ``0..n-1`` in shuffled order
    """
    if k < 1 or dim < 1:
        raise DataError(f"k and dim must be positive, got k={k}, dim={dim}")
    if k > n:
        raise DataError(f"k={k} exceeds n={n}")
    if sigma < 0 or separation < 0:
        raise DataError("sigma and separation must be non-negative")
    _check_fraction("outlier_frac", outlier_frac)
    _check_fraction("duplicate_frac", duplicate_frac)

    n_out = int(round(n * outlier_frac))
    n_dup = int(round(n * duplicate_frac))
    n_in = n - n_out - n_dup
    if n_in < k:
        raise DataError(f"only {n_in} inliers left for {k} blobs")

    rng = np.random.default_rng(seed)
    centers = _separated_centers(k, dim, separation, rng)
    counts = [n_in // k + (1 if i < n_in % k else 0) for i in range(k)]
    inliers, labels = make_blobs(n_samples=counts, centers=centers, cluster_std=sigma,
                                 shuffle=False, random_state=int(rng.integers(2**31 - 1)))

    parts = [inliers]
    part_labels = [labels.astype(np.int64)]
    if n_out:
        parts.append(_uniform_box(inliers, n_out, 3.0 * sigma, rng))
        part_labels.append(np.full(n_out, OUTLIER, dtype=np.int64))
    if n_dup:
        source = rng.choice(n_in, size=n_dup, replace=True)
        parts.append(inliers[source])
        part_labels.append(labels[source].astype(np.int64))

    order = rng.permutation(n)
    points = np.vstack(parts)[order]
    all_labels = np.concatenate(part_labels)[order]
    logger.debug(f"synth_blobs n={n} k={k} dim={dim}: {n_out} outliers, {n_dup} duplicates")
    return Dataset(points, tuple(str(i) for i in range(n)), all_labels)


def inject_outliers(dataset: Dataset, frac: float, seed: int = 0,
                    margin: Optional[float] = None) -> Dataset:
    """
    Append round(N * frac) uniform outliers to a dataset.

    Outliers fall in the data's bounding box widened by ``margin`` (default:
    10% of the largest extent) and carry the OUTLIER label when the dataset
    is labelled. Their ids are ``outlier-<i>``.
    """
    _check_fraction("outlier fraction", frac)
    count = int(round(dataset.n * frac))
    if count == 0:
        return dataset

    extent = float(np.max(dataset.points.max(axis=0) - dataset.points.min(axis=0)))
    pad = 0.1 * extent if margin is None else margin
    rng = np.random.default_rng(seed)
    outliers = _uniform_box(dataset.points, count, pad, rng)

    ids = dataset.ids + tuple(f"outlier-{i}" for i in range(count))
    labels = None
    if dataset.labels is not None:
        labels = np.concatenate([dataset.labels, np.full(count, OUTLIER, dtype=np.int64)])
    return Dataset(np.vstack([dataset.points, outliers]), ids, labels)


@dataclass(frozen=True)
class BlobSpec:
    """Parameters of a synthetic source; outliers come from the condition."""
    n: int = 300
    k: int = 3
    dim: int = 2
    sigma: float = 0.5
    separation: float = 6.0
    duplicate_frac: float = 0.0

    def generate(self, outlier_frac: float, seed: int) -> Dataset:
        return synth_blobs(self.n, self.k, self.dim, self.sigma, self.separation,
                           outlier_frac, self.duplicate_frac, seed)
