"""
Tests for the command-line entry point and its exit codes.
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.dataset import Dataset, load_csv, save_csv
from main import main
from speech.frontend import Signal, read_wav, write_wav
from utils.logger import setup_logger

RATE = 8000

RUN_CONFIG = {
    'ensemble': {'methods': ['kmeans'], 'k': 2, 'seeds': [1, 2], 'learning_rate': 2.0, 'epochs': 300,
                 'shared_init': True},
    'maintenance': {'eps': 3.0, 'min_pts': 2},
}


def run(*args) -> int:
    with pytest.raises(SystemExit) as excinfo:
        main([str(a) for a in args])
    return excinfo.value.code


def write_tone(path: Path, freq: float, n: int = 1600, amplitude: float = 0.3):
    t = np.arange(n) / RATE
    write_wav(Signal(amplitude * np.sin(2 * np.pi * freq * t), RATE), path)


@pytest.fixture(autouse=True)
def restore_logging():
    """Commands replace the log sinks; put a quiet one back afterwards."""
    yield
    setup_logger(level="WARNING")


@pytest.fixture
def blobs_csv(tmp_path, two_blobs):
    path = tmp_path / "blobs.csv"
    save_csv(two_blobs, path)
    return path


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(RUN_CONFIG), encoding="utf-8")
    return path


class TestCluster:
    """Test cases for the cluster command."""

    def test_writes_labels(self, tmp_path, blobs_csv):
        out = tmp_path / "labels.csv"
        assert run("cluster", blobs_csv, "--k", 2, "--method", "pam", "--out", out) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["id", "label"]
        assert len(frame) == 40
        assert frame["label"].nunique() == 2

    def test_stdout(self, blobs_csv, capsys):
        assert run("cluster", blobs_csv, "--k", 2) == 0
        assert capsys.readouterr().out.startswith("id,label\n")

    def test_missing_file_is_data_error(self, tmp_path):
        assert run("cluster", tmp_path / "missing.csv", "--k", 2) == 2

    def test_k_too_large_is_data_error(self, blobs_csv):
        assert run("cluster", blobs_csv, "--k", 100) == 2

    def test_usage_errors(self, blobs_csv):
        assert run("cluster", blobs_csv) == 1
        assert run("cluster", blobs_csv, "--k", 2, "--bogus") == 1
        assert run("cluster", blobs_csv, "--k", 2, "--method", "spectral") == 1

    def test_help(self):
        assert run("--help") == 0

    def test_unwritable_output_is_data_error(self, blobs_csv):
        assert run("cluster", blobs_csv, "--k", 2, "--out", blobs_csv / "labels.csv") == 2

    def test_interrupt_is_usage_exit(self, blobs_csv, mocker):
        mocker.patch("main.load_csv", side_effect=KeyboardInterrupt)
        assert run("cluster", blobs_csv, "--k", 2) == 1


class TestMaintainCommand:
    """Test cases for the maintain command."""

    def test_outputs(self, tmp_path, two_blobs):
        points = np.vstack([two_blobs.points, [[40.0, -40.0]]])
        path = tmp_path / "noisy.csv"
        save_csv(Dataset(points), path)
        out = tmp_path / "reduced.csv"
        assert run("maintain", path, "--eps", 3.0, "--min-pts", 2, "--out", out) == 0
        reduced = load_csv(out)
        removed = pd.read_csv(tmp_path / "reduced.removed.csv", dtype=str)
        assert reduced.n + len(removed) == 41
        assert "40" in removed["id"].tolist()

    def test_invalid_parameters(self, tmp_path, blobs_csv):
        out = tmp_path / "reduced.csv"
        assert run("maintain", blobs_csv, "--eps", 0.0, "--min-pts", 2, "--out", out) == 2


@pytest.mark.integration
class TestConsensusCommands:
    """Test cases for the consensus and rcfm commands."""

    @pytest.mark.parametrize("command", ["consensus", "rcfm"])
    def test_outputs(self, tmp_path, blobs_csv, run_config, command):
        out = tmp_path / command / "labels.csv"
        assert run(command, blobs_csv, "--config", run_config, "--out", out) == 0
        labels = pd.read_csv(out)
        assert list(labels.columns) == ["id", "final_label"]
        assert len(labels) == 40
        manifest = yaml.safe_load((tmp_path / command / "labels.manifest.yaml").read_text())
        assert manifest["final_k"] == 2
        assert (tmp_path / command / "labels.model.txt").is_file()
        saved = yaml.safe_load((tmp_path / command / "labels.config.yaml").read_text())
        assert saved["ensemble"]["seeds"] == [1, 2]
        assert saved["maintenance"]["enabled"] is (command == "rcfm")

    def test_consensus_ignores_maintenance_settings(self, tmp_path, blobs_csv):
        config = tmp_path / "bad_maintenance.yaml"
        config.write_text(yaml.safe_dump({**RUN_CONFIG, 'maintenance': {'eps': 0.0}}), encoding="utf-8")
        out = tmp_path / "labels.csv"
        assert run("consensus", blobs_csv, "--config", config, "--out", out) == 0
        manifest = yaml.safe_load((tmp_path / "labels.manifest.yaml").read_text())
        assert "maintenance" not in manifest["config"]
        assert "maintenance" not in manifest
        assert run("rcfm", blobs_csv, "--config", config, "--out", tmp_path / "r.csv") == 2

    def test_missing_config_is_data_error(self, tmp_path, blobs_csv):
        out = tmp_path / "labels.csv"
        assert run("consensus", blobs_csv, "--config", tmp_path / "none.yaml", "--out", out) == 2

    def test_k_override(self, tmp_path, blobs_csv, run_config):
        out = tmp_path / "labels.csv"
        assert run("consensus", blobs_csv, "--config", run_config, "--k", 50, "--out", out) == 2


@pytest.mark.integration
class TestPredictCommand:
    """Test cases for the predict command."""

    @pytest.fixture
    def trained(self, tmp_path, blobs_csv, run_config):
        out = tmp_path / "run" / "labels.csv"
        assert run("consensus", blobs_csv, "--config", run_config, "--out", out) == 0
        return out

    def test_reproduces_training_labels(self, tmp_path, blobs_csv, trained):
        out = tmp_path / "predicted.csv"
        assert run("predict", blobs_csv, "--model", trained.with_name("labels.model.txt"), "--out", out) == 0
        predicted = pd.read_csv(out, dtype={"id": str})
        labels = pd.read_csv(trained, dtype={"id": str})
        assert list(predicted.columns) == ["id", "final_label"]
        assert predicted["id"].tolist() == labels["id"].tolist()
        assert predicted["final_label"].tolist() == labels["final_label"].tolist()

    def test_stdout(self, blobs_csv, trained, capsys):
        capsys.readouterr()
        assert run("predict", blobs_csv, "--model", trained.with_name("labels.model.txt")) == 0
        assert capsys.readouterr().out.startswith("id,final_label\n")

    def test_missing_manifest_is_data_error(self, tmp_path, blobs_csv, trained):
        model = trained.with_name("labels.model.txt")
        assert run("predict", blobs_csv, "--model", model, "--manifest", tmp_path / "none.yaml") == 2

    def test_manifest_needed_for_other_names(self, tmp_path, blobs_csv, trained):
        renamed = tmp_path / "weights.txt"
        renamed.write_bytes(trained.with_name("labels.model.txt").read_bytes())
        assert run("predict", blobs_csv, "--model", renamed) == 1
        manifest = trained.with_name("labels.manifest.yaml")
        assert run("predict", blobs_csv, "--model", renamed, "--manifest", manifest) == 0

    def test_feature_mismatch_is_data_error(self, tmp_path, trained):
        wide = tmp_path / "wide.csv"
        save_csv(Dataset(np.zeros((3, 3))), wide)
        assert run("predict", wide, "--model", trained.with_name("labels.model.txt")) == 2


class TestSpeechCommands:
    """Test cases for the features and mix commands."""

    @pytest.fixture
    def corpus(self, tmp_path):
        directory = tmp_path / "digits"
        directory.mkdir()
        for name, freq in (("0_a", 300.0), ("1_b", 900.0)):
            write_tone(directory / f"{name}.wav", freq)
        return directory

    @pytest.fixture
    def noise_wav(self, tmp_path):
        path = tmp_path / "noise.wav"
        write_wav(Signal(0.05 * np.random.default_rng(0).standard_normal(4000), RATE), path)
        return path

    def test_features(self, tmp_path, corpus, capsys):
        out = tmp_path / "features.csv"
        assert run("features", corpus, "--out", out) == 0
        assert "2 digit classes" in capsys.readouterr().out
        data = load_csv(out)
        assert (data.n, data.m) == (2, 39)
        assert data.labels.tolist() == [0, 1]
        assert pd.read_csv(out).columns[1] == "c0"

    def test_noisy_features(self, tmp_path, corpus, noise_wav):
        out = tmp_path / "noisy.csv"
        assert run("features", corpus, "--out", out, "--noise", noise_wav, "--snr-db", 5) == 0
        assert load_csv(out).n == 2

    def test_noise_without_snr(self, tmp_path, corpus, noise_wav):
        assert run("features", corpus, "--out", tmp_path / "f.csv", "--noise", noise_wav) == 1

    def test_mix(self, tmp_path, corpus, noise_wav, capsys):
        out = tmp_path / "mixed.wav"
        assert run("mix", corpus / "0_a.wav", noise_wav, "--snr-db", 10, "--out", out) == 0
        assert capsys.readouterr().out.startswith("0.20s gain=")
        assert len(read_wav(out)) == 1600

    def test_mix_rejects_non_wav(self, tmp_path, noise_wav):
        bogus = tmp_path / "bogus.wav"
        bogus.write_text("not audio", encoding="utf-8")
        assert run("mix", bogus, noise_wav, "--snr-db", 0, "--out", tmp_path / "o.wav") == 2


@pytest.mark.integration
class TestExperimentCommand:
    """Test cases for the experiment command."""

    def write_experiment(self, path: Path, methods):
        path.write_text(yaml.safe_dump({
            'experiment': {
                'name': 'cli',
                'source': {'type': 'synthetic', 'n': 60, 'k': 2},
                'conditions': [{'name': 'clean'}],
                'methods': methods,
                'seeds': [1],
            },
            'ensemble': {'k': 2},
        }), encoding="utf-8")
        return path

    def test_report(self, tmp_path, capsys):
        config = self.write_experiment(tmp_path / "exp.yaml", ['kmeans'])
        out = tmp_path / "out" / "report.txt"
        assert run("experiment", "--config", config, "--out", out, "--no-progress") == 0
        assert out.read_text(encoding="utf-8").startswith("Method")
        assert (tmp_path / "out" / "report.manifest.yaml").is_file()
        assert "K-means" in capsys.readouterr().out

    def test_needs_an_output(self, tmp_path):
        config = self.write_experiment(tmp_path / "exp.yaml", ['kmeans'])
        assert run("experiment", "--config", config, "--no-progress") == 1

    def test_schema_violation(self, tmp_path):
        config = self.write_experiment(tmp_path / "exp.yaml", ['spectral'])
        assert run("experiment", "--config", config, "--out", tmp_path / "r.txt") == 2

    def test_unparseable_yaml(self, tmp_path):
        config = tmp_path / "broken.yaml"
        config.write_text("experiment: [unclosed\n", encoding="utf-8")
        assert run("experiment", "--config", config, "--out", tmp_path / "r.txt") == 2
