"""Greedy autoregressive decoding with instrumented engines.

Three engines share one token-choice rule (argmax, ties to the lowest id):

* ``naive``  - every step re-encodes the image and re-runs the decoder over
  the whole prefix.
* ``memory`` - the image is encoded once; the decoder still re-runs over the
  whole prefix.
* ``cached`` - the image is encoded once and each decoder layer computes only
  the newest token's row, reading earlier rows from a :class:`DecodeCache`.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np
import structlog

from core.foundation import CacheInvariantError, ConfigurationError
from models.schemas import DecoderConfig, Engine
from services.autodiff import Tensor
from services.caption_decoder import decode_forward, decoder_layer, embed_tokens, project_logits
from services.model_weights import CaptionModel
from services.op_counter import OpCounter
from services.tokenizer import EOS_ID, SOS_ID
from services.vit_encoder import EncoderMemory, encode_image

logger = structlog.get_logger()


def _checksum(row: np.ndarray) -> int:
    return zlib.crc32(row.tobytes())


class DecodeCache:
    """Append-only per-layer output rows for one decode session.

    Level -1 holds the embedded input rows; level l holds decoder layer l's
    outputs. Rows are stored read-only with a checksum taken at write time.
    """

    def __init__(self, layers: int):
        self.layers = layers
        self._rows: Dict[int, List[np.ndarray]] = {level: [] for level in range(-1, layers)}
        self._sums: Dict[int, List[int]] = {level: [] for level in range(-1, layers)}

    def __len__(self) -> int:
        self.check_aligned()
        return len(self._rows[-1])

    def row_counts(self) -> List[int]:
        return [len(self._rows[level]) for level in range(-1, self.layers)]

    def check_aligned(self) -> None:
        counts = self.row_counts()
        if len(set(counts)) != 1:
            raise CacheInvariantError("decode cache levels hold different row counts", counts)

    def append(self, level: int, row: np.ndarray) -> None:
        if level not in self._rows:
            raise CacheInvariantError(f"no cache level {level}", self.row_counts())
        stored = np.array(row, copy=True).reshape(-1)
        stored.setflags(write=False)
        self._rows[level].append(stored)
        self._sums[level].append(_checksum(stored))

    def rows(self, level: int) -> np.ndarray:
        """All rows of one level stacked as t x D."""
        return np.stack(self._rows[level])

    def verify(self) -> None:
        """Re-hash every row and compare with its write-time checksum."""
        for level, rows in self._rows.items():
            for position, row in enumerate(rows):
                if _checksum(row) != self._sums[level][position]:
                    raise CacheInvariantError(
                        f"cache row {position} of level {level} changed after it was written", self.row_counts()
                    )


@dataclass
class DecodeResult:
    """Token ids (leading SOS included) plus the work spent producing them."""

    tokens: List[int]
    counter: OpCounter
    engine: Engine
    seconds: float = 0.0
    cache: Optional[DecodeCache] = field(default=None, repr=False)

    @property
    def generated(self) -> List[int]:
        return self.tokens[1:]


def argmax_lowest(logits: np.ndarray) -> int:
    """Index of the maximum; np.argmax already returns the first (lowest) one."""
    return int(np.argmax(logits))


def step_cached(
    cache: DecodeCache,
    token_id: int,
    memory: EncoderMemory,
    cfg: DecoderConfig,
    weights: Mapping[str, Tensor],
    counter: Optional[OpCounter] = None,
) -> Tensor:
    """Feed one token at position len(cache); return its 1 x V logits.

    Each layer attends from the new row over its cached input rows (new row
    included) and over the memory, then appends its output row.
    """
    cache.check_aligned()
    if cache.layers != cfg.layers:
        raise CacheInvariantError(f"cache has {cache.layers} layers, decoder has {cfg.layers}", cache.row_counts())
    counter = counter if counter is not None else OpCounter()
    position = len(cache)
    dtype = weights["dec.tok_emb"].dtype.type

    with counter.scoped("decoder"):
        x = embed_tokens([token_id], weights, cfg, start=position)
        cache.append(-1, x.data)
        for index in range(cfg.layers):
            context = Tensor(cache.rows(index - 1), dtype=dtype)
            x = decoder_layer(x, context, memory, weights, index, cfg, counter=counter)
            cache.append(index, x.data)
        logits = project_logits(x, weights)
    counter.decode_steps += 1
    return logits


def _resolve_steps(cfg: DecoderConfig, max_steps: Optional[int]) -> int:
    if max_steps is None:
        return cfg.max_len
    if max_steps < 1 or max_steps > cfg.max_len:
        raise ConfigurationError("max_steps", f"must be in [1, {cfg.max_len}], got {max_steps}")
    return max_steps


def _pick(logits: np.ndarray, suppress_eos: bool) -> int:
    if suppress_eos:
        logits = logits.copy()
        logits[EOS_ID] = -np.inf
    return argmax_lowest(logits)


def greedy_decode_from_memory(
    memory: EncoderMemory,
    cfg: DecoderConfig,
    weights: Mapping[str, Tensor],
    engine: Engine = Engine.CACHED,
    max_steps: Optional[int] = None,
    suppress_eos: bool = False,
    counter: Optional[OpCounter] = None,
) -> DecodeResult:
    """Decode against a fixed memory; ``naive`` and ``memory`` behave alike here."""
    steps = _resolve_steps(cfg, max_steps)
    counter = counter if counter is not None else OpCounter()
    tokens = [SOS_ID]
    cache = DecodeCache(cfg.layers) if engine == Engine.CACHED else None
    started = time.perf_counter()

    for _ in range(steps):
        if cache is not None:
            row = step_cached(cache, tokens[-1], memory, cfg, weights, counter).data[0]
        else:
            row = decode_forward(tokens, memory, cfg, weights, counter).data[-1]
            counter.decode_steps += 1
        token = _pick(row, suppress_eos)
        tokens.append(token)
        if token == EOS_ID:
            break

    return DecodeResult(
        tokens=tokens, counter=counter, engine=engine, seconds=time.perf_counter() - started, cache=cache
    )


def greedy_decode(
    model: CaptionModel,
    image: Tensor,
    engine: Engine = Engine.CACHED,
    max_steps: Optional[int] = None,
    suppress_eos: bool = False,
) -> DecodeResult:
    """Greedy caption of one image with the chosen engine."""
    engine = Engine(engine)
    cfg = model.config
    weights = model.weights
    steps = _resolve_steps(cfg.decoder, max_steps)
    counter = OpCounter()

    if engine != Engine.NAIVE:
        started = time.perf_counter()
        memory = encode_image(image, cfg.encoder, weights, counter)
        result = greedy_decode_from_memory(
            memory, cfg.decoder, weights, engine, steps, suppress_eos, counter
        )
        result.seconds = time.perf_counter() - started
    else:
        started = time.perf_counter()
        tokens = [SOS_ID]
        for _ in range(steps):
            memory = encode_image(image, cfg.encoder, weights, counter)
            row = decode_forward(tokens, memory, cfg.decoder, weights, counter).data[-1]
            counter.decode_steps += 1
            token = _pick(row, suppress_eos)
            tokens.append(token)
            if token == EOS_ID:
                break
        result = DecodeResult(tokens=tokens, counter=counter, engine=engine, seconds=time.perf_counter() - started)

    logger.debug(
        "decode_finished",
        engine=engine.value,
        steps=counter.decode_steps,
        encoder_calls=counter.encoder_calls,
        decoder_qk_pairs=counter.decoder_qk_pairs,
    )
    return result


def greedy_decode_naive(model: CaptionModel, image: Tensor, max_steps: Optional[int] = None, **kwargs) -> DecodeResult:
    return greedy_decode(model, image, Engine.NAIVE, max_steps, **kwargs)


def greedy_decode_cached(model: CaptionModel, image: Tensor, max_steps: Optional[int] = None, **kwargs) -> DecodeResult:
    return greedy_decode(model, image, Engine.CACHED, max_steps, **kwargs)
