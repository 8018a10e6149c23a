"""Configuration module for molcap"""

from .settings import Settings, get_settings
from .presets import PRESETS, preset_values

__all__ = ["Settings", "get_settings", "PRESETS", "preset_values"]
