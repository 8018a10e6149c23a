"""Atomic artifact writes: checkpoints, reports, manifests, images."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Union


def atomic_write_bytes(path: Union[str, Path], content: bytes) -> Path:
    """Write an artifact beside its destination, then atomically publish it.

    A failed write leaves neither a partial artifact nor its temp file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode="wb",
        dir=path.parent,
        prefix=f".{path.name}.",
        suffix=".tmp",
        delete=False,
    )
    temp_path = Path(handle.name)
    try:
        with handle:
            handle.write(content)
            handle.flush()
            os.fsync(handle.fileno())
        temp_path.replace(path)
    except BaseException:
        temp_path.unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: Union[str, Path], content: str) -> Path:
    return atomic_write_bytes(path, content.encode("utf-8"))
