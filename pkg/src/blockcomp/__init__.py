"""Blockage-aware coordinated multipoint beamforming for mmWave downlinks."""
from .config import SystemConfig, ConfigError, load_config

__all__ = ["SystemConfig", "ConfigError", "load_config"]
__version__ = "0.1.0"
