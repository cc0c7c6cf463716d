"""
Dataset and Partition Containers

This module holds the immutable data containers shared by every other
package (feature matrix, crisp and fuzzy partitions), CSV ingestion, and the
partition comparison tools: contingency tables, label alignment against a
reference partition, and optimal-assignment clustering accuracy.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from utils.errors import DataError
from utils.logger import get_logger

logger = get_logger(__name__)

OUTLIER = -1
"""Ground-truth label of injected outliers (no class)."""

ID_COLUMN = "id"
LABEL_COLUMN = "label"

ArrayLike = Union[np.ndarray, Sequence[int], Sequence[float]]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """N x M feature matrix with unique row ids and optional class labels."""
    points: np.ndarray
    ids: Tuple[str, ...] = ()
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2:
            raise DataError(f"points must be a 2-D matrix, got {points.ndim} dimensions")
        n, m = points.shape
        if n == 0:
            raise DataError("empty dataset")
        if m < 1:
            raise DataError("dataset needs at least one feature column")
        if not np.all(np.isfinite(points)):
            raise DataError("dataset contains non-finite values")

        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise DataError(f"{len(ids)} ids for {n} rows")
        if len(set(ids)) != n:
            raise DataError("duplicate ids")

        labels = None
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise DataError(f"labels must have shape ({n},), got {labels.shape}")
            if np.any(labels < OUTLIER):
                raise DataError("labels must be class indices >= 0 or OUTLIER (-1)")
            _frozen(labels)

        object.__setattr__(self, 'points', _frozen(points))
        object.__setattr__(self, 'ids', ids)
        object.__setattr__(self, 'labels', labels)

    @property
    def n(self) -> int:
        """Number of rows (N)."""
        return int(self.points.shape[0])

    @property
    def m(self) -> int:
        """Feature dimension (M)."""
        return int(self.points.shape[1])

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def n_classes(self) -> int:
        """Number of classes L (outliers excluded); 0 without labels."""
        if self.labels is None:
            return 0
        inliers = self.labels[self.labels != OUTLIER]
        return int(inliers.max()) + 1 if inliers.size else 0

    def subset(self, indices: ArrayLike) -> 'Dataset':
        """Rows at ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DataError("empty dataset")
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.points[idx], tuple(self.ids[i] for i in idx), labels)

    def with_points(self, points: np.ndarray) -> 'Dataset':
        """Same ids and labels over a transformed feature matrix."""
        return Dataset(points, self.ids, self.labels)

    def inlier_mask(self) -> np.ndarray:
        """Boolean mask of rows that carry a class label."""
        if self.labels is None:
            return np.ones(self.n, dtype=bool)
        return self.labels != OUTLIER


@dataclass(frozen=True)
class Partition:
    """Crisp assignment of N points to k non-empty clusters."""
    assignment: np.ndarray
    k: int

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=np.int64)
        if assignment.ndim != 1 or assignment.size == 0:
            raise DataError("partition assignment must be a non-empty vector")
        k = int(self.k)
        if k < 1:
            raise DataError(f"partition needs k >= 1, got {k}")
        if assignment.min() < 0 or assignment.max() >= k:
            raise DataError(f"cluster indices must lie in [0, {k})")
        if np.unique(assignment).size != k:
            raise DataError("partition has empty clusters")
        object.__setattr__(self, 'assignment', _frozen(assignment))
        object.__setattr__(self, 'k', k)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @classmethod
    def from_labels(cls, labels: ArrayLike) -> Tuple['Partition', Dict[int, int]]:
        """
        Compact arbitrary integer labels to the dense range [0, k).

        Returns:
            The partition and the mapping original label -> dense label
            (dense labels follow ascending original labels)
        """
        raw = np.asarray(labels, dtype=np.int64)
        uniques, dense = np.unique(raw, return_inverse=True)
        mapping = {int(u): i for i, u in enumerate(uniques)}
        return cls(dense, len(uniques)), mapping


@dataclass(frozen=True)
class FuzzyPartition:
    """c x n membership matrix whose columns sum to one."""
    memberships: np.ndarray
    tolerance: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        u = np.array(self.memberships, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] < 1:
            raise DataError("memberships must be a non-empty c x n matrix")
        if not np.all(np.isfinite(u)):
            raise DataError("memberships contain non-finite values")
        if u.min() < -self.tolerance or u.max() > 1.0 + self.tolerance:
            raise DataError("memberships must lie in [0, 1]")
        if np.max(np.abs(u.sum(axis=0) - 1.0)) > self.tolerance:
            raise DataError("membership columns must sum to 1")
        object.__setattr__(self, 'memberships', _frozen(u))

    @property
    def c(self) -> int:
        return int(self.memberships.shape[0])

    @property
    def n(self) -> int:
        return int(self.memberships.shape[1])

    def argmax(self) -> np.ndarray:
        """Per-point cluster of maximal membership, ties to the lowest index."""
        return np.argmax(self.memberships, axis=0)


def load_csv(path: Union[str, Path]) -> Dataset:
    """
    Load a dataset from CSV.

    The first row is a header. An optional ``id`` column (first) holds row ids
    and an optional ``label`` column (last) holds integer class labels; every
    other column is a numeric feature.

    Args:
        path: CSV file path

    Returns:
        Dataset with one row per data line
    """
    csv_path = Path(path)
    if not csv_path.is_file():
        raise DataError(f"file not found: {csv_path}")

    try:
        frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise DataError("empty dataset") from e
    except pd.errors.ParserError as e:
        raise DataError(f"ragged rows in {csv_path}: {e}") from e

    if frame.empty:
        raise DataError("empty dataset")

    columns = list(frame.columns)
    ids: Tuple[str, ...] = ()
    if columns and columns[0] == ID_COLUMN:
        ids = tuple(frame[ID_COLUMN].tolist())
        columns = columns[1:]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate ids in {csv_path}")

    labels = None
    if columns and columns[-1] == LABEL_COLUMN:
        try:
            labels = frame[LABEL_COLUMN].astype(np.int64).to_numpy()
        except (TypeError, ValueError) as e:
            raise DataError(f"non-integer label in {csv_path}") from e
        columns = columns[:-1]

    if not columns:
        raise DataError(f"no feature columns in {csv_path}")

    features = frame[columns]
    if features.isna().to_numpy().any() or (features == "").to_numpy().any():
        raise DataError(f"ragged rows in {csv_path}: missing feature cells")
    try:
        points = features.astype(np.float64).to_numpy()
    except ValueError as e:
        raise DataError(f"non-numeric feature cell in {csv_path}: {e}") from e

    dataset = Dataset(points, ids, labels)
    logger.debug(f"Loaded {csv_path}: N={dataset.n}, M={dataset.m}, labels={dataset.has_labels}")
    return dataset


def save_csv(dataset: Dataset, path: Union[str, Path],
             feature_names: Optional[Sequence[str]] = None):
    """Write a dataset in the format read by ``load_csv``."""
    names = list(feature_names) if feature_names else [f"f{j}" for j in range(dataset.m)]
    if len(names) != dataset.m:
        raise DataError(f"{len(names)} feature names for {dataset.m} columns")
    frame = pd.DataFrame(dataset.points, columns=names)
    frame.insert(0, ID_COLUMN, list(dataset.ids))
    if dataset.labels is not None:
        frame[LABEL_COLUMN] = dataset.labels
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator='\n')


def contingency(p: Partition, q: Partition) -> np.ndarray:
    """
    Count matrix between two partitions of the same points.

    Entry (a, b) is the number of points with p(i) = a and q(i) = b.
    """
    if p.n != q.n:
        raise DataError(f"partitions cover different point counts ({p.n} vs {q.n})")
    table = np.zeros((p.k, q.k), dtype=np.int64)
    np.add.at(table, (p.assignment, q.assignment), 1)
    return table


def align_labels(p: Partition, reference: Partition) -> Partition:
    """
    Relabel ``p`` so it agrees with ``reference`` as much as possible.

    The permutation maximizes the trace of the permuted contingency matrix
    (exact assignment). Among optimal permutations the one with the most fixed
    labels wins, so aligning an aligned partition returns it unchanged.
    """
    if p.n != reference.n:
        raise DataError(f"partitions cover different point counts ({p.n} vs {reference.n})")
    if p.k != reference.k:
        raise DataError(f"cluster counts differ ({p.k} vs {reference.k})")

    k = p.k
    # a total of at most k tie-break points never outweighs one agreeing point
    score = contingency(p, reference) * (k + 1) + np.eye(k, dtype=np.int64)
    rows, cols = linear_sum_assignment(score, maximize=True)
    mapping = np.empty(k, dtype=np.int64)
    mapping[rows] = cols
    return Partition(mapping[p.assignment], k)


def agreement(p: Partition, q: Partition) -> int:
    """Number of points with identical labels in both partitions."""
    if p.n != q.n:
        raise DataError(f"partitions cover different point counts ({p.n} vs {q.n})")
    return int(np.count_nonzero(p.assignment == q.assignment))


def clustering_accuracy(pred: Union[Partition, ArrayLike], truth: ArrayLike) -> float:
    """
    Optimal one-to-one cluster-to-class accuracy.

    Args:
        pred: Predicted partition or raw cluster labels
        truth: Ground-truth class labels (any integers)

    Returns:
        Fraction of points matched under the best injective mapping
    """
    predicted = pred.assignment if isinstance(pred, Partition) else np.asarray(pred, dtype=np.int64)
    actual = np.asarray(truth, dtype=np.int64)
    if predicted.size == 0 or actual.size == 0:
        raise DataError("accuracy of an empty assignment is undefined")
    if predicted.shape != actual.shape:
        raise DataError(f"prediction and truth lengths differ ({predicted.size} vs {actual.size})")

    _, pred_dense = np.unique(predicted, return_inverse=True)
    _, true_dense = np.unique(actual, return_inverse=True)
    table = np.zeros((pred_dense.max() + 1, true_dense.max() + 1), dtype=np.int64)
    np.add.at(table, (pred_dense, true_dense), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / float(actual.size)
