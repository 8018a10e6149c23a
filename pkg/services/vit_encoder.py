"""Convolution-free image encoder: patches, class token, learned positions, transformer blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Optional

import numpy as np
import structlog

from core.foundation import ConfigurationError, DimensionError
from models.schemas import EncoderConfig, NormPlacement
from services.attention import AttentionParams, multi_head_attention
from services.autodiff import Tensor, add, concat_rows, dropout
from services.layers import feed_forward, linear, norm
from services.op_counter import OpCounter

logger = structlog.get_logger()


@dataclass(frozen=True)
class EncoderMemory:
    """(N+1) x D image representation; row 0 is the class-token output."""

    tensor: Tensor

    @property
    def rows(self) -> int:
        return self.tensor.shape[0]

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]


def image_to_input(image: np.ndarray, dtype: Optional[type] = None) -> Tensor:
    """uint8 drawing -> float ink intensity in [0, 1] (black ink = 1).

    2D arrays gain a trailing channel axis.
    """
    array = np.asarray(image)
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise DimensionError("image_to_input", [array.shape], "expects H x W or H x W x C")
    ink = (255.0 - array.astype(np.float64)) / 255.0
    return Tensor(ink, dtype=dtype)


def patchify(img: Tensor, patch_size: int) -> Tensor:
    """Non-overlapping P x P patches in row-major patch order.

    Each patch flattens rows, then columns, then channels.
    """
    data = img.data if img.ndim == 3 else img.data[:, :, None]
    height, width, channels = data.shape
    p = patch_size
    if p <= 0 or height % p or width % p:
        raise DimensionError(
            "patchify", [(height, width), (p,)], f"H={height} and W={width} must be divisible by P={p}"
        )
    grid = data.reshape(height // p, p, width // p, p, channels).transpose(0, 2, 1, 3, 4)
    return Tensor(grid.reshape(-1, p * p * channels), dtype=img.dtype.type)


def embed_patches(patches: Tensor, weights: Mapping[str, Tensor]) -> Tensor:
    """Row 0 = class embedding + pos_0; row i = patch_i W + b + pos_i."""
    positions = weights["enc.pos"]
    if positions.shape[0] != patches.shape[0] + 1:
        raise ConfigurationError(
            "enc.pos",
            f"position table has {positions.shape[0]} rows but {patches.shape[0]} patches need {patches.shape[0] + 1}",
        )
    projected = linear(patches, weights["enc.patch_proj.w"], weights["enc.patch_proj.b"])
    tokens = concat_rows([weights["enc.cls"], projected])
    return add(tokens, positions)


def encoder_block(
    x: Tensor,
    weights: Mapping[str, Tensor],
    index: int,
    cfg: EncoderConfig,
    counter: Optional[OpCounter],
    training: bool,
    rng: Optional[np.random.Generator],
    weights_sink: Optional[List[Tensor]] = None,
) -> Tensor:
    prefix = f"enc.layers.{index}"
    attn = AttentionParams.from_table(weights, f"{prefix}.attn")
    if cfg.norm == NormPlacement.PRE:
        h = norm(x, weights, f"{prefix}.ln1")
        mixed = multi_head_attention(h, h, attn, cfg.heads, counter=counter, weights_sink=weights_sink)
        x = add(x, dropout(mixed, cfg.dropout, rng, training))
        h = norm(x, weights, f"{prefix}.ln2")
        ffn = feed_forward(h, weights, f"{prefix}.ffn", cfg.dropout, rng, training)
        return add(x, dropout(ffn, cfg.dropout, rng, training))

    mixed = multi_head_attention(x, x, attn, cfg.heads, counter=counter, weights_sink=weights_sink)
    x = norm(add(x, dropout(mixed, cfg.dropout, rng, training)), weights, f"{prefix}.ln1")
    ffn = feed_forward(x, weights, f"{prefix}.ffn", cfg.dropout, rng, training)
    return norm(add(x, dropout(ffn, cfg.dropout, rng, training)), weights, f"{prefix}.ln2")


def encode_image(
    img: Tensor,
    cfg: EncoderConfig,
    weights: Mapping[str, Tensor],
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    weights_sink: Optional[List[Tensor]] = None,
) -> EncoderMemory:
    """Run the encoder once over one image; returns all N+1 rows."""
    shape = img.shape if img.ndim == 3 else (*img.shape, 1)
    expected = (cfg.image_size, cfg.image_size, cfg.channels)
    if tuple(shape) != expected:
        raise DimensionError("encode_image", [tuple(shape), expected], "image does not match encoder config")

    counter = counter if counter is not None else OpCounter()
    with counter.scoped("encoder"):
        x = embed_patches(patchify(img, cfg.patch_size), weights)
        x = dropout(x, cfg.dropout, rng, training)
        for index in range(cfg.layers):
            x = encoder_block(x, weights, index, cfg, counter, training, rng, weights_sink)
        if cfg.norm == NormPlacement.PRE:
            x = norm(x, weights, "enc.ln_f")
    counter.encoder_calls += 1
    return EncoderMemory(tensor=x)
