"""
Configuration Management System

This module handles loading and managing configuration settings for the
toolkit from YAML files. File values are merged over built-in defaults and
read with dot-notation keys.
"""

import copy
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema
import yaml

from .errors import ConfigError
from .logger import get_logger

DEFAULTS: Dict[str, Any] = {
    'seed': 0,
    'ensemble': {
        'methods': ['kmeans', 'pam', 'fuzzy_cmeans'],
        'k': 3,
        'seeds': [1, 2, 3, 4, 5],
        'hidden_sizes': None,
        'learning_rate': 0.5,
        'epochs': 500,
        'shared_init': False,
        'init_seed': 0,
        'standardize': True,
        'n_jobs': 1,
        'kmeans': {'max_iter': 300, 'tol': 1e-6, 'n_init': 10},
        'pam': {'max_iter': 100},
        'fuzzy_cmeans': {'m': 2.0, 'tol': 1e-6, 'max_iter': 300},
    },
    'maintenance': {
        'enabled': True,
        'eps': 1.0,
        'min_pts': 4,
        'm': 2.5,
        'xi': 1e-4,
        'max_iter': 300,
        'exponent_mode': 'standard',
        'covariance': 'fuzzy',
        'cov_reg': None,
        'dedup_radius': 0.0,
    },
    'mfcc': {
        'frame_len': 200,
        'frame_shift': 80,
        'n_filters': 23,
        'n_ceps': 13,
        'pre_emphasis': 0.97,
        'log_floor': 1e-10,
        'delta_width': 2,
    },
    'logging': {
        'level': 'INFO',
        'file': None,
    },
}


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class Config:
    """
    Configuration management system.

    Loads configuration from YAML files and provides easy access
    to configuration values with defaults.
    """

    def __init__(self, config_file: Optional[str] = "config/default.yaml", strict: bool = False):
        """
        Initialize configuration from file.

        Args:
            config_file: YAML file to load; None uses the built-in defaults only
            strict: Raise ConfigError when the file is missing or unreadable
                instead of falling back to defaults
        """
        self.logger = get_logger(__name__)
        self.config_data: Dict[str, Any] = {}
        self.config_file = config_file
        self.strict = strict

        self._load_config()

    def _load_config(self):
        """Load configuration from YAML file."""
        self.config_data = copy.deepcopy(DEFAULTS)
        if self.config_file is None:
            return

        config_path = Path(self.config_file)
        if not config_path.exists():
            if self.strict:
                raise ConfigError(f"configuration file not found: {config_path}")
            self.logger.warning(f"Configuration file not found: {config_path}, using defaults")
            return

        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            if self.strict:
                raise ConfigError(f"cannot parse {config_path}: {e}") from e
            self.logger.error(f"Error loading configuration: {e}")
            return

        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")

        self.config_data = _deep_merge(DEFAULTS, loaded)
        self.logger.info(f"Configuration loaded from {config_path}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value by dot-notation key.

        Args:
            key: Configuration key in dot notation (e.g., 'ensemble.k')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        value: Any = self.config_data
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return default if value is None and default is not None else value

    def set(self, key: str, value: Any):
        """
        Set configuration value by dot-notation key.

        Args:
            key: Configuration key in dot notation
            value: Value to set
        """
        keys = key.split('.')
        config = self.config_data

        # Navigate to parent dictionary
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value
        self.logger.debug(f"Set config '{key}' = {value}")

    def get_section(self, section: str) -> Dict[str, Any]:
        """
        Get entire configuration section.

        Args:
            section: Section name (e.g., 'ensemble', 'ensemble.kmeans')

        Returns:
            Dictionary containing section data
        """
        value = self.get(section, {})
        return copy.deepcopy(value) if isinstance(value, dict) else {}

    def save_config(self, filename: Optional[str] = None):
        """
        Save current configuration to file.

        Args:
            filename: Optional filename, uses current config file if None
        """
        target = filename or self.config_file
        if target is None:
            raise ConfigError("no file name to save configuration to")
        save_path = Path(target)
        save_path.parent.mkdir(parents=True, exist_ok=True)

        with open(save_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.config_data, f, default_flow_style=False, indent=2,
                           sort_keys=True)

        self.logger.info(f"Configuration saved to {save_path}")

    def validate(self, schema: Dict[str, Any]):
        """
        Validate configuration values against a JSON schema.

        Args:
            schema: jsonschema document describing the accepted configuration

        Raises:
            ConfigError: with the offending key path when validation fails
        """
        try:
            jsonschema.validate(instance=self.config_data, schema=schema)
        except jsonschema.ValidationError as e:
            location = '.'.join(str(p) for p in e.absolute_path) or '<root>'
            raise ConfigError(f"invalid configuration at '{location}': {e.message}") from e
        self.logger.debug("Configuration validation passed")
