"""Building blocks shared by the encoder and decoder stacks."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from services.autodiff import Tensor, add, dropout, gelu, layer_norm, matmul


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def norm(x: Tensor, table: Mapping[str, Tensor], prefix: str) -> Tensor:
    return layer_norm(x, table[f"{prefix}.g"], table[f"{prefix}.b"])


def feed_forward(
    x: Tensor,
    table: Mapping[str, Tensor],
    prefix: str,
    rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """GELU(x W1 + b1) W2 + b2, applied row by row."""
    hidden = gelu(linear(x, table[f"{prefix}.w1"], table[f"{prefix}.b1"]))
    hidden = dropout(hidden, rate, rng, training)
    return linear(hidden, table[f"{prefix}.w2"], table[f"{prefix}.b2"])
