"""Post-norm transformer decoder over encoder memory.

Token embedding plus sinusoidal positions, then per layer: masked
self-attention, cross-attention over memory, feed-forward, each followed by
residual add and LayerNorm. An independent linear head produces logits.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from core.foundation import ConfigurationError, DimensionError, SequenceLengthError
from models.schemas import DecoderConfig
from services.attention import AttentionParams, multi_head_attention
from services.autodiff import Tensor, add, default_dtype, dropout, embedding
from services.layers import feed_forward, linear, norm
from services.op_counter import OpCounter
from services.vit_encoder import EncoderMemory


@lru_cache(maxsize=16)
def _pe_table(max_len: int, dim: int, base: float) -> np.ndarray:
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    pair = np.arange(0, dim, 2, dtype=np.float64)
    angles = positions / np.power(base, pair / dim)
    table = np.empty((max_len, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    table.setflags(write=False)
    return table


def sinusoidal_pe(max_len: int, dim: int, base: float = 10000.0) -> Tensor:
    """PE(pos, 2i) = sin(pos / base^(2i/D)), PE(pos, 2i+1) = cos(same)."""
    if dim % 2:
        raise ConfigurationError("model_dim", f"sinusoidal encoding needs an even width, got {dim}")
    if max_len < 1:
        raise ConfigurationError("max_len", "must be at least 1")
    return Tensor(_pe_table(max_len, dim, float(base)), dtype=default_dtype())


def causal_mask(length: int) -> np.ndarray:
    """Boolean T x T, True where key position <= query position."""
    if length < 1:
        raise ConfigurationError("length", "causal mask needs T >= 1")
    return np.tril(np.ones((length, length), dtype=bool))


def embed_tokens(
    token_ids: Sequence[int],
    weights: Mapping[str, Tensor],
    cfg: DecoderConfig,
    start: int = 0,
) -> Tensor:
    """Token embeddings plus PE rows start..start+T-1."""
    table = weights["dec.tok_emb"]
    stop = start + len(token_ids)
    if stop > cfg.max_len:
        raise SequenceLengthError(stop, cfg.max_len)
    pe = _pe_table(cfg.max_len, cfg.model_dim, float(cfg.pe_base))[start:stop]
    return add(embedding(table, token_ids), Tensor(pe, dtype=table.dtype.type))


def decoder_layer(
    x_q: Tensor,
    x_ctx: Tensor,
    memory: EncoderMemory,
    weights: Mapping[str, Tensor],
    index: int,
    cfg: DecoderConfig,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """One post-norm block computed for the query rows ``x_q``.

    ``x_ctx`` holds this layer's input rows for every visible position (the
    query rows included); the full forward passes the whole sequence with a
    causal mask, the cached step passes one query row and no mask.
    """
    prefix = f"dec.layers.{index}"
    self_attn = AttentionParams.from_table(weights, f"{prefix}.self_attn")
    cross_attn = AttentionParams.from_table(weights, f"{prefix}.cross_attn")

    mixed = multi_head_attention(x_q, x_ctx, self_attn, cfg.heads, mask=mask, counter=counter)
    x = norm(add(x_q, dropout(mixed, cfg.dropout, rng, training)), weights, f"{prefix}.ln1")
    attended = multi_head_attention(x, memory.tensor, cross_attn, cfg.heads, counter=counter)
    x = norm(add(x, dropout(attended, cfg.dropout, rng, training)), weights, f"{prefix}.ln2")
    ffn = feed_forward(x, weights, f"{prefix}.ffn", cfg.dropout, rng, training)
    return norm(add(x, dropout(ffn, cfg.dropout, rng, training)), weights, f"{prefix}.ln3")


def project_logits(x: Tensor, weights: Mapping[str, Tensor]) -> Tensor:
    return linear(x, weights["dec.out.w"], weights["dec.out.b"])


def decode_forward(
    tokens: Sequence[int],
    memory: EncoderMemory,
    cfg: DecoderConfig,
    weights: Mapping[str, Tensor],
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Logits T x V for every position of ``tokens`` (teacher forcing)."""
    length = len(tokens)
    if length == 0:
        raise SequenceLengthError(0, cfg.max_len)
    if length > cfg.max_len:
        raise SequenceLengthError(length, cfg.max_len)
    if memory.dim != cfg.model_dim:
        raise DimensionError(
            "decode_forward", [(memory.rows, memory.dim), (length, cfg.model_dim)], "memory width differs"
        )

    counter = counter if counter is not None else OpCounter()
    mask = causal_mask(length)
    with counter.scoped("decoder"):
        x = dropout(embed_tokens(tokens, weights, cfg), cfg.dropout, rng, training)
        for index in range(cfg.layers):
            x = decoder_layer(x, x, memory, weights, index, cfg, mask, counter, training, rng)
        return project_logits(x, weights)
