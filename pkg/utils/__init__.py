"""Utility functions for molcap"""

from .artifacts import atomic_write_bytes, atomic_write_text
from .images import load_image, save_pgm, save_png
from .logging import configure_logging
from .rng import SplitMix64
from .text import levenshtein

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "configure_logging",
    "levenshtein",
    "load_image",
    "save_pgm",
    "save_png",
    "SplitMix64",
]
