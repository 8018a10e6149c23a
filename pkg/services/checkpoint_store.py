"""Binary checkpoint files.

Layout, all integers little-endian::

    b"ISCK" | u32 version | u32 len | config JSON (canonical, UTF-8)
    u32 tensor count
    per tensor, names sorted: u16 len | name | u8 rank | u32 dims[rank] | f32 data (row-major)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import structlog
from pydantic import ValidationError

from core.foundation import CheckpointError
from models.schemas import ModelConfig
from services.autodiff import Tensor
from services.model_weights import CaptionModel, ModelWeights, parameter_shapes
from utils.artifacts import atomic_write_bytes

logger = structlog.get_logger()

MAGIC = b"ISCK"
VERSION = 1
_F32 = np.dtype("<f4")


def encode_checkpoint(config: ModelConfig, weights: ModelWeights) -> bytes:
    buffer = io.BytesIO()
    config_bytes = config.canonical_json().encode("utf-8")
    buffer.write(MAGIC)
    buffer.write(struct.pack("<II", VERSION, len(config_bytes)))
    buffer.write(config_bytes)
    names = sorted(weights)
    buffer.write(struct.pack("<I", len(names)))
    for name in names:
        data = np.ascontiguousarray(weights[name].data, dtype=_F32)
        encoded = name.encode("utf-8")
        buffer.write(struct.pack("<H", len(encoded)))
        buffer.write(encoded)
        buffer.write(struct.pack("<B", data.ndim))
        buffer.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buffer.write(data.tobytes())
    return buffer.getvalue()


def save_checkpoint(path: Union[str, Path], model: CaptionModel) -> Path:
    written = atomic_write_bytes(path, encode_checkpoint(model.config, model.weights))
    logger.info("checkpoint_saved", path=str(written), tensors=len(model.weights))
    return written


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError(self.source, f"truncated at byte {self.offset}")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> CaptionModel:
    reader = _Reader(payload, source)
    if reader.take(4) != MAGIC:
        raise CheckpointError(source, "bad magic; not a molcap checkpoint")
    version, config_len = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(source, f"unsupported format version {version}")
    try:
        config = ModelConfig.model_validate_json(reader.take(config_len))
    except ValidationError as exc:
        raise CheckpointError(source, f"invalid config: {exc.errors()[0]['msg']}") from exc

    (count,) = reader.unpack("<I")
    tensors: Dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        if name in tensors:
            raise CheckpointError(source, f"duplicate tensor '{name}'")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I")
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(reader.take(size * _F32.itemsize), dtype=_F32).reshape(dims)
        tensors[name] = Tensor(data.astype(np.float32), requires_grad=True, name=name, dtype=np.float32)
    if reader.offset != len(payload):
        raise CheckpointError(source, f"{len(payload) - reader.offset} trailing bytes")

    expected = parameter_shapes(config)
    weights = ModelWeights({name: tensors[name] for name in expected if name in tensors})
    if len(weights) != len(tensors):
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointError(source, f"unexpected tensors {extra[:3]}")
    weights.check_shapes(config, source)
    return CaptionModel(config=config, weights=weights)


def load_checkpoint(path: Union[str, Path]) -> CaptionModel:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(str(path), "file not found") from exc
    except OSError as exc:
        raise CheckpointError(str(path), f"cannot read: {exc}") from exc
    model = decode_checkpoint(payload, str(path))
    logger.info("checkpoint_loaded", path=str(path), tensors=len(model.weights))
    return model
