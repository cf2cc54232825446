"""Synthetic underwater fish-school MOT sequences and MOT evaluation tools."""

from .core import Bbox, ConfigError, EnvironmentVariant, SequenceConfig, load_config, validate_config

__all__ = ["Bbox", "ConfigError", "EnvironmentVariant", "SequenceConfig", "load_config", "validate_config"]
__version__ = "0.1.0"
