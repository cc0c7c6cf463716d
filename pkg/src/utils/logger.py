"""
Logging System

This module provides centralized logging for the toolkit on top of loguru.
Modules call ``get_logger(__name__)``; entry points call ``setup_logger`` once.
"""

import sys
from pathlib import Path
from typing import Any, Optional, TextIO

from loguru import logger as _logger

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} - {extra[component]} - {level} - {message}"

DEFAULT_LEVEL = "WARNING"

_logger.configure(extra={"component": "rcfm"})


def install_default_sink(stream: Optional[TextIO] = None):
    """
    Replace every sink with one stderr sink at WARNING.

    Called once at import in place of loguru's DEBUG default; entry points
    replace it through ``setup_logger``.
    """
    _logger.remove()
    _logger.add(stream if stream is not None else sys.stderr, level=DEFAULT_LEVEL, format=LOG_FORMAT)


install_default_sink()


def setup_logger(name: str = "rcfm", level: str = "INFO",
                 log_file: Optional[str] = None) -> Any:
    """
    Set up the application sinks.

    Args:
        name: Component name bound to the returned logger
        level: Minimum level for every sink
        log_file: Optional log file path (rotated at 10 MB, 5 files kept)

    Returns:
        Logger bound to ``name``
    """
    _logger.remove()
    _logger.add(sys.stderr, level=level, format=LOG_FORMAT)

    if log_file:
        try:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            _logger.add(str(log_path), level=level, format=LOG_FORMAT,
                        rotation="10 MB", retention=5)
        except OSError as e:
            _logger.error(f"Failed to create file sink: {e}")

    return _logger.bind(component=name)


def get_logger(name: str) -> Any:
    """
    Get a logger bound to a component name.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Bound loguru logger
    """
    return _logger.bind(component=f"rcfm.{name}")


class RunLogger:
    """
    Specialized logger for pipeline stages and experiment cells.
    """

    def __init__(self, run_name: str = "run"):
        """Initialize the run logger."""
        self.run_name = run_name
        self.logger = _logger.bind(component=f"rcfm.events.{run_name}")

    def log_run_start(self, description: str, seed: Optional[int] = None):
        """Log run start event."""
        seed_info = f" (seed: {seed})" if seed is not None else ""
        self.logger.info(f"RUN_START - {description}{seed_info}")

    def log_stage(self, stage: str, seconds: float, detail: str = ""):
        """Log a completed pipeline stage."""
        suffix = f" - {detail}" if detail else ""
        self.logger.info(f"STAGE - {stage} - {seconds:.3f}s{suffix}")

    def log_convergence(self, algorithm: str, iterations: int, converged: bool):
        """Log iterative algorithm termination."""
        status = "converged" if converged else "hit max_iter"
        self.logger.debug(f"CONVERGENCE - {algorithm} - {iterations} iterations - {status}")

    def log_maintenance(self, n_points: int, n_noisy: int, n_redundant: int):
        """Log a maintenance pass."""
        kept = n_points - n_noisy - n_redundant
        self.logger.info(
            f"MAINTENANCE - {n_points} points - noisy: {n_noisy} - "
            f"redundant: {n_redundant} - kept: {kept}"
        )

    def log_cell(self, method: str, condition: str, accuracy: float):
        """Log one report cell."""
        self.logger.info(f"CELL - {method} @ {condition} - {accuracy:.2f}%")
