"""8-bit grayscale image IO: binary PGM (P5) natively, PNG on ingestion."""
from __future__ import annotations

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.foundation import ImageReadError
from utils.artifacts import atomic_write_bytes


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Decode a PGM or PNG file into an HxW uint8 array.

    Color PNGs are converted to luminance.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in {"PPM", "PNG"}:
                raise ImageReadError(str(path), f"unsupported format {img.format}")
            gray = img.convert("L") if img.mode != "L" else img.copy()
    except FileNotFoundError as exc:
        raise ImageReadError(str(path), "file not found") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageReadError(str(path), str(exc)) from exc
    return np.asarray(gray, dtype=np.uint8).copy()


def encode_pgm(image: np.ndarray) -> bytes:
    """Binary P5 bytes for a 2D uint8 array."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM encoding expects a 2D uint8 array")
    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PPM")
    return buffer.getvalue()


def save_pgm(path: Union[str, Path], image: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_pgm(image))


def save_png(path: Union[str, Path], image: np.ndarray) -> Path:
    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PNG")
    return atomic_write_bytes(path, buffer.getvalue())
