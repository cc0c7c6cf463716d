"""
Unit tests for synthetic data, report tables and the experiment runner.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.dataset import OUTLIER, Dataset, save_csv
from ensemble.consensus import EnsembleConfig
from harness.experiment import (Condition, ExperimentConfig, build_condition_data, derive_seed,
                                load_experiment, run_experiment, save_outputs, score,
                                split_indices)
from harness.report import ReportTable, display_name, format_table, save_table
from harness.synthetic import BlobSpec, inject_outliers, synth_blobs
from utils.errors import ConfigError, DataError, StageError

EXPERIMENTS_DIR = Path(__file__).parent.parent / "config" / "experiments"


@pytest.fixture
def tiny_experiment():
    """Two conditions, two base methods, two seeds on small synthetic blobs."""
    return ExperimentConfig(
        name="tiny",
        source_type="synthetic",
        conditions=(Condition("clean"), Condition("outliers-10", outlier_frac=0.1)),
        methods=("kmeans", "pam"),
        ensemble=EnsembleConfig(methods=("kmeans",), k=2, seeds=(1,)),
        seeds=(1, 2),
        blobs=BlobSpec(n=60, k=2),
    )


class TestSynthBlobs:
    """Test cases for synthetic blob generation."""

    def test_outlier_count(self):
        data = synth_blobs(100, 3, outlier_frac=0.1, seed=4)
        assert data.n == 100
        assert int(np.sum(data.labels == OUTLIER)) == 10
        assert set(data.labels[data.labels != OUTLIER].tolist()) == {0, 1, 2}

    def test_reproducible(self):
        a = synth_blobs(80, 2, dim=3, outlier_frac=0.05, duplicate_frac=0.05, seed=9)
        b = synth_blobs(80, 2, dim=3, outlier_frac=0.05, duplicate_frac=0.05, seed=9)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.ids == tuple(str(i) for i in range(80))

    def test_duplicates_are_exact_copies(self):
        data = synth_blobs(50, 2, duplicate_frac=0.2, seed=1)
        unique = np.unique(data.points, axis=0)
        assert len(unique) <= 40

    def test_blobs_are_balanced(self):
        data = synth_blobs(31, 3, seed=0)
        assert sorted(np.bincount(data.labels).tolist()) == [10, 10, 11]

    @pytest.mark.parametrize("kwargs", [{"outlier_frac": 1.0}, {"outlier_frac": -0.1},
                                        {"duplicate_frac": 1.5}, {"k": 20}, {"k": 0},
                                        {"outlier_frac": 0.9}])
    def test_invalid(self, kwargs):
        params = {"n": 10, "k": 2, **kwargs}
        with pytest.raises(DataError):
            synth_blobs(**params)

    def test_blob_spec(self):
        data = BlobSpec(n=40, k=2).generate(0.1, seed=3)
        assert int(np.sum(data.labels == OUTLIER)) == 4


class TestInjectOutliers:
    """Test cases for appending outliers to an existing dataset."""

    def test_appends_labelled_outliers(self, two_blobs):
        data = inject_outliers(two_blobs, 0.1, seed=2)
        assert data.n == 44
        assert data.ids[-4:] == ("outlier-0", "outlier-1", "outlier-2", "outlier-3")
        assert np.all(data.labels[-4:] == OUTLIER)
        np.testing.assert_array_equal(data.points[:40], two_blobs.points)

    def test_zero_fraction_is_identity(self, two_blobs):
        assert inject_outliers(two_blobs, 0.0) is two_blobs

    def test_unlabelled_stays_unlabelled(self):
        data = inject_outliers(Dataset(np.arange(20.0).reshape(10, 2)), 0.2, seed=0)
        assert data.n == 12 and data.labels is None

    def test_outliers_inside_padded_box(self, two_blobs):
        data = inject_outliers(two_blobs, 0.5, seed=1, margin=1.0)
        lo = two_blobs.points.min(axis=0) - 1.0
        hi = two_blobs.points.max(axis=0) + 1.0
        assert np.all(data.points >= lo) and np.all(data.points <= hi)


class TestReport:
    """Test cases for report tables."""

    @pytest.fixture
    def table(self):
        return ReportTable(("kmeans", "rcfm"), ("clean", "street"),
                           np.array([[81.0234, 95.0], [100.0, 7.5]]))

    def test_format(self, table):
        assert format_table(table) == ("Method    clean  street\n"
                                       "K-means   81.02   95.00\n"
                                       "RCFM     100.00    7.50\n")

    def test_single_cell(self):
        text = format_table(ReportTable(("pam",), ("c",), np.array([[50.0]])))
        assert len(text.splitlines()) == 2
        assert text.splitlines()[1].endswith("50.00")

    def test_incomplete_grid(self):
        table = ReportTable(("kmeans",), ("clean",), np.full((1, 1), np.nan))
        assert not table.complete
        with pytest.raises(DataError, match="incomplete"):
            format_table(table)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            ReportTable(("kmeans",), ("a", "b"), np.zeros((2, 2)))

    def test_cell_lookup(self, table):
        assert table.cell("rcfm", "street") == 7.5
        assert display_name("fuzzy_cmeans") == "Fuzzy C-means"
        assert display_name("custom") == "custom"

    def test_save(self, tmp_path, table):
        out = tmp_path / "report" / "table.txt"
        save_table(table, out)
        assert out.read_text(encoding="utf-8") == format_table(table)
        rows = (tmp_path / "report" / "table.csv").read_text(encoding="utf-8").splitlines()
        assert rows[0] == "Method,clean,street"
        assert rows[1] == "K-means,81.02,95.00"


class TestExperimentConfig:
    """Test cases for experiment validation."""

    def test_shipped_experiments_load(self):
        for path in sorted(EXPERIMENTS_DIR.glob("*.yaml")):
            cfg = load_experiment(path)
            assert cfg.methods and cfg.conditions

    def test_noisy_consensus_has_no_maintenance(self):
        cfg = load_experiment(EXPERIMENTS_DIR / "noisy_consensus.yaml")
        assert cfg.ensemble.maintenance is None
        assert cfg.blobs == BlobSpec(n=300, k=3, dim=2, sigma=0.5, separation=6.0)

    def test_schema_error_names_the_key(self, make_config):
        config = make_config({'experiment': {'source': {'type': 'synthetic'},
                                             'conditions': [{'name': 'clean'}],
                                             'methods': ['kmeans', 'spectral']}})
        with pytest.raises(ConfigError, match="experiment.methods.1"):
            ExperimentConfig.from_config(config)

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(tmp_path / "missing.yaml")

    def test_duplicate_condition_names(self, tiny_experiment):
        with pytest.raises(DataError, match="duplicate"):
            ExperimentConfig(**{**vars(tiny_experiment),
                                'conditions': (Condition("a"), Condition("a", 0.1))})

    def test_noise_needs_wav_source(self, tiny_experiment):
        with pytest.raises(DataError, match="wav"):
            ExperimentConfig(**{**vars(tiny_experiment),
                                'conditions': (Condition("street", noise="n.wav", snr_db=0.0),)})

    def test_rcfm_needs_maintenance(self, tiny_experiment):
        with pytest.raises(DataError, match="maintenance"):
            ExperimentConfig(**{**vars(tiny_experiment), 'methods': ('rcfm',)})

    def test_missing_csv_input(self, tiny_experiment, tmp_path):
        cfg = ExperimentConfig(**{**vars(tiny_experiment), 'source_type': 'csv',
                                  'csv_path': str(tmp_path / "none.csv")})
        with pytest.raises(DataError, match="missing inputs"):
            cfg.check_inputs()


class TestExperimentHelpers:
    """Test cases for seeds, splits and scoring."""

    def test_derive_seed(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(2, 1)

    def test_split(self):
        train, test = split_indices(10, 0.3, seed=4)
        assert len(test) == 3 and len(train) == 7
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))
        assert list(train) == sorted(train) and list(test) == sorted(test)

    def test_zero_test_fraction_uses_every_row(self):
        train, test = split_indices(5, 0.0, seed=0)
        assert train.tolist() == test.tolist() == [0, 1, 2, 3, 4]

    def test_split_leaves_no_training_rows(self):
        with pytest.raises(DataError):
            split_indices(2, 0.9, seed=0)

    def test_score_ignores_outliers(self):
        data = Dataset(np.zeros((4, 1)), labels=np.array([0, 0, 1, OUTLIER]))
        assert score(lambda points: np.array([1, 1, 0, 0]), data) == 100.0

    def test_score_needs_labels(self):
        with pytest.raises(DataError):
            score(lambda points: np.zeros(len(points), dtype=int), Dataset(np.zeros((3, 1))))

    def test_csv_condition_data(self, tiny_experiment, two_blobs):
        cfg = ExperimentConfig(**{**vars(tiny_experiment), 'source_type': 'csv',
                                  'csv_path': 'unused.csv', 'blobs': None})
        data = build_condition_data(cfg, 1, seed=1, base=two_blobs)
        assert data.n == 44
        assert int(np.sum(data.labels == OUTLIER)) == 4
        assert build_condition_data(cfg, 0, seed=1, base=two_blobs) is two_blobs


@pytest.mark.integration
class TestRunExperiment:
    """Test cases for the full methods x conditions grid."""

    def test_grid_is_complete(self, tiny_experiment):
        table = run_experiment(tiny_experiment, progress=False)
        assert table.methods == ("kmeans", "pam")
        assert table.conditions == ("clean", "outliers-10")
        assert table.complete
        assert np.all((table.cells >= 0.0) & (table.cells <= 100.0))
        assert len(table.per_seed[("pam", "clean")]) == 2
        assert table.cell("kmeans", "clean") >= 90.0

    def test_reproducible_outputs(self, tiny_experiment, tmp_path):
        paths = []
        for run in ("a", "b"):
            table = run_experiment(tiny_experiment, progress=False)
            out = tmp_path / run / "report.txt"
            manifest = save_outputs(table, tiny_experiment, out)
            paths.append((out, manifest))
        (report_a, manifest_a), (report_b, manifest_b) = paths
        assert report_a.read_bytes() == report_b.read_bytes()
        assert manifest_a.read_bytes() == manifest_b.read_bytes()
        assert manifest_a.name == "report.manifest.yaml"
        assert (tmp_path / "a" / "report.csv").is_file()

    def test_csv_source(self, tiny_experiment, two_blobs, tmp_path):
        path = tmp_path / "blobs.csv"
        save_csv(two_blobs, path)
        cfg = ExperimentConfig(**{**vars(tiny_experiment), 'source_type': 'csv',
                                  'csv_path': str(path), 'blobs': None, 'methods': ('kmeans',)})
        table = run_experiment(cfg, progress=False)
        assert table.cell("kmeans", "clean") == 100.0

    def test_consensus_method_runs(self, tiny_experiment):
        ensemble = EnsembleConfig(methods=("kmeans",), k=2, seeds=(1,), learning_rate=2.0,
                                  epochs=200)
        cfg = ExperimentConfig(**{**vars(tiny_experiment), 'methods': ('mlncf',),
                                  'ensemble': ensemble, 'seeds': (1,)})
        assert run_experiment(cfg, progress=False).complete

    def test_failure_names_method_and_condition(self, tiny_experiment):
        cfg = ExperimentConfig(**{**vars(tiny_experiment),
                                  'ensemble': EnsembleConfig(methods=("kmeans",), k=50, seeds=(1,))})
        with pytest.raises(StageError) as excinfo:
            run_experiment(cfg, progress=False)
        assert excinfo.value.stage == "kmeans @ clean"
        assert isinstance(excinfo.value.__cause__, DataError)
