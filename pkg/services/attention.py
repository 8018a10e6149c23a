"""Scaled dot-product and multi-head attention over autodiff tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from core.foundation import ConfigurationError, ContractViolationError, DimensionError
from services.autodiff import (
    MASK_FILL,
    Tensor,
    add,
    concat_cols,
    matmul,
    scale,
    slice_cols,
    softmax,
    transpose,
)
from services.op_counter import OpCounter


def _check_mask(mask: Optional[np.ndarray], rows: int, cols: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (rows, cols):
        raise DimensionError("scaled_dot_attention", [mask.shape, (rows, cols)], "mask shape differs from scores")
    empty = np.nonzero(~mask.any(axis=1))[0]
    if empty.size:
        raise ContractViolationError("scaled_dot_attention", f"query row {int(empty[0])} has no attendable position")
    return mask


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """softmax(Q K^T / sqrt(d_k) + mask) V.

    ``mask`` is boolean q x s with True meaning attend. Masked scores get
    MASK_FILL, so forbidden value rows carry an exactly zero weight.
    """
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise DimensionError("scaled_dot_attention", [q.shape, k.shape, v.shape], "expects matrices")
    if q.shape[1] != k.shape[1]:
        raise DimensionError("scaled_dot_attention", [q.shape, k.shape], "query/key widths differ")
    if k.shape[0] != v.shape[0]:
        raise DimensionError("scaled_dot_attention", [k.shape, v.shape], "key/value lengths differ")
    rows, cols = q.shape[0], k.shape[0]
    mask = _check_mask(mask, rows, cols)

    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    if mask is not None:
        penalty = np.where(mask, 0.0, MASK_FILL).astype(scores.dtype)
        scores = add(scores, Tensor(penalty, dtype=scores.dtype.type))
    weights = softmax(scores)
    out = matmul(weights, v)
    if counter is not None:
        counter.add_qk_pairs(rows * cols)
    if return_weights:
        return out, weights
    return out


@dataclass(frozen=True)
class AttentionParams:
    """Packed projections: head h owns columns h*dk:(h+1)*dk of w_q, w_k, w_v."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def from_table(cls, table: Mapping[str, Tensor], prefix: str) -> "AttentionParams":
        return cls(
            w_q=table[f"{prefix}.w_q"],
            w_k=table[f"{prefix}.w_k"],
            w_v=table[f"{prefix}.w_v"],
            w_o=table[f"{prefix}.w_o"],
        )


def multi_head_attention(
    x_q: Tensor,
    x_kv: Tensor,
    params: AttentionParams,
    heads: int,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    weights_sink: Optional[List[Tensor]] = None,
) -> Tensor:
    """Concat(head_1..head_H) W_o with each head at width D/H.

    The qk-pair counter is charged once per sublayer, not once per head.
    ``weights_sink`` collects per-head attention weights when given.
    """
    width = params.w_q.shape[1]
    if width % heads:
        raise ConfigurationError("heads", f"model_dim {width} is not divisible by {heads} heads")
    head_dim = width // heads

    q = matmul(x_q, params.w_q)
    k = matmul(x_kv, params.w_k)
    v = matmul(x_kv, params.w_v)

    outputs: List[Tensor] = []
    for head in range(heads):
        lo, hi = head * head_dim, (head + 1) * head_dim
        out, attn = scaled_dot_attention(
            slice_cols(q, lo, hi),
            slice_cols(k, lo, hi),
            slice_cols(v, lo, hi),
            mask=mask,
            return_weights=True,
        )
        outputs.append(out)
        if weights_sink is not None:
            weights_sink.append(attn)
    if counter is not None:
        counter.add_qk_pairs(x_q.shape[0] * x_kv.shape[0])
    merged = outputs[0] if heads == 1 else concat_cols(outputs)
    return matmul(merged, params.w_o)
