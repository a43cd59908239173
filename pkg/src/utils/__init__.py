"""Logging, configuration and file helpers."""

from .config_loader import apply_overrides, load_config
from .logger import setup_logging
from .matrix_io import read_matrix, write_matrix

__all__ = ["apply_overrides", "load_config", "setup_logging", "read_matrix", "write_matrix"]
