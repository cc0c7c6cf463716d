"""
Unit tests for configuration, logging helpers and error types.
"""

import io
import sys
from pathlib import Path

import pytest
import yaml

# Add src to path for testing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from utils.config import DEFAULTS, Config
from utils.errors import ConfigError, DataError, RcfmError, StageError, TrainingError
from utils.logger import RunLogger, get_logger, install_default_sink

DEFAULT_FILE = Path(__file__).parent.parent / "config" / "default.yaml"

SCHEMA = {
    'type': 'object',
    'properties': {
        'ensemble': {
            'type': 'object',
            'properties': {'k': {'type': 'integer', 'minimum': 1}},
        },
    },
}


class TestConfig:
    """Test cases for the Config class."""

    def test_defaults_only(self):
        config = Config(None)
        assert config.get('ensemble.k') == 3
        assert config.get('maintenance.m') == 2.5
        assert config.get('ensemble.kmeans.n_init') == 10
        assert config.get('missing.key', 'fallback') == 'fallback'

    def test_shipped_default_matches_builtins(self):
        assert Config(str(DEFAULT_FILE), strict=True).config_data == DEFAULTS

    def test_file_values_merge_over_defaults(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("ensemble:\n  k: 7\n  kmeans:\n    n_init: 2\n", encoding="utf-8")
        config = Config(str(path))
        assert config.get('ensemble.k') == 7
        assert config.get('ensemble.kmeans.n_init') == 2
        assert config.get('ensemble.kmeans.max_iter') == 300
        assert config.get('maintenance.eps') == 1.0

    def test_null_falls_back_to_given_default(self):
        config = Config(None)
        assert config.get('maintenance.cov_reg') is None
        assert config.get('maintenance.cov_reg', 0.5) == 0.5

    def test_missing_file(self, tmp_path):
        assert Config(str(tmp_path / "none.yaml")).get('ensemble.k') == 3
        with pytest.raises(ConfigError, match="not found"):
            Config(str(tmp_path / "none.yaml"), strict=True)

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("ensemble: [1, 2\n", encoding="utf-8")
        assert Config(str(path)).get('ensemble.k') == 3
        with pytest.raises(ConfigError, match="cannot parse"):
            Config(str(path), strict=True)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            Config(str(path))

    def test_set_and_get(self):
        config = Config(None)
        config.set('ensemble.k', 5)
        config.set('new.nested.value', True)
        assert config.get('ensemble.k') == 5
        assert config.get('new.nested.value') is True
        assert config.get_section('new') == {'nested': {'value': True}}

    def test_get_section_is_a_copy(self):
        config = Config(None)
        section = config.get_section('ensemble')
        section['k'] = 99
        assert config.get('ensemble.k') == 3
        assert config.get_section('seed') == {}

    def test_file_values_do_not_touch_defaults(self, make_config):
        config = make_config({'ensemble': {'k': 4}})
        assert config.get('ensemble.k') == 4
        assert DEFAULTS['ensemble']['k'] == 3

    def test_save_and_reload(self, tmp_path):
        path = tmp_path / "saved" / "run.yaml"
        config = Config(None)
        config.set('ensemble.epochs', 42)
        config.save_config(str(path))
        assert yaml.safe_load(path.read_text(encoding="utf-8"))['ensemble']['epochs'] == 42

        reloaded = Config(str(path), strict=True)
        assert reloaded.get('ensemble.epochs') == 42
        assert reloaded.config_data == config.config_data

    def test_save_without_name(self):
        with pytest.raises(ConfigError):
            Config(None).save_config()

    def test_validate(self, make_config):
        make_config({'ensemble': {'k': 2}}).validate(SCHEMA)
        with pytest.raises(ConfigError, match="ensemble.k"):
            make_config({'ensemble': {'k': 0}}, "bad.yaml").validate(SCHEMA)


class TestErrors:
    """Test cases for the error hierarchy."""

    def test_hierarchy(self):
        assert issubclass(DataError, RcfmError) and issubclass(DataError, ValueError)
        assert issubclass(ConfigError, ValueError)
        assert issubclass(TrainingError, ArithmeticError)
        assert issubclass(StageError, RcfmError)

    def test_stage_error(self):
        cause = DataError("bad shape")
        error = StageError("combine_weights", "layer shapes differ", cause)
        assert error.stage == "combine_weights"
        assert error.cause is cause
        assert str(error) == "[combine_weights] layer shapes differ"


class TestLogging:
    """Test cases for the logging helpers."""

    def test_run_logger_events(self):
        run_logger = RunLogger("test")
        run_logger.log_run_start("two blobs", seed=3)
        run_logger.log_stage("align_ensemble", 0.25, "6 partitions")
        run_logger.log_convergence("pam", 4, True)
        run_logger.log_maintenance(100, 7, 2)
        run_logger.log_cell("rcfm", "clean", 99.5)
        assert run_logger.run_name == "test"

    def test_component_binding(self):
        records = []
        logger = get_logger("widget")
        sink = logger.add(lambda message: records.append(message.record), level="DEBUG")
        try:
            logger.info("hello")
        finally:
            logger.remove(sink)
        assert records[0]["extra"]["component"] == "rcfm.widget"
        assert records[0]["message"] == "hello"

    def test_default_sink_hides_debug(self):
        stream = io.StringIO()
        install_default_sink(stream)
        try:
            logger = get_logger("quiet")
            logger.debug("fine detail")
            logger.info("progress")
            logger.warning("heads up")
        finally:
            install_default_sink()
        output = stream.getvalue()
        assert "fine detail" not in output
        assert "progress" not in output
        assert "rcfm.quiet - WARNING - heads up" in output
