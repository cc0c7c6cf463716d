"""
Shared fixtures for the test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.dataset import Dataset


def blobs(centers, per_blob: int, sigma: float, seed: int) -> Dataset:
    """Gaussian blobs in blob order, labelled by blob index."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    points = np.vstack([c + sigma * rng.standard_normal((per_blob, centers.shape[1]))
                        for c in centers])
    labels = np.repeat(np.arange(len(centers)), per_blob)
    return Dataset(points, labels=labels)


@pytest.fixture
def make_blobs():
    """Factory for labelled Gaussian blob datasets."""
    return blobs


@pytest.fixture
def two_blobs():
    """Two 2-D blobs at (0,0) and (10,10), 20 points each."""
    return blobs([[0.0, 0.0], [10.0, 10.0]], 20, 0.5, seed=7)


@pytest.fixture
def three_blobs():
    """Three 2-D blobs with centers at least 6 apart, 50 points each."""
    return blobs([[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]], 50, 0.5, seed=11)


@pytest.fixture
def make_config(tmp_path):
    """Factory writing a YAML run configuration and loading it strictly."""
    from utils.config import Config

    def _make(values: dict, name: str = "run.yaml") -> Config:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(values), encoding="utf-8")
        return Config(str(path), strict=True)

    return _make
