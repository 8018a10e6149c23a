"""Decode-cost benchmark: measured qk-pair counts against closed forms."""

from __future__ import annotations

from typing import Iterable, List, Mapping, Sequence

import structlog

from core.foundation import CostLawViolationError, EngineMismatchError
from models.schemas import BenchRow, DecoderConfig, Engine
from services.autodiff import Tensor
from services.inference_service import DecodeResult, greedy_decode, greedy_decode_from_memory
from services.model_weights import CaptionModel
from services.vit_encoder import EncoderMemory

logger = structlog.get_logger()


def naive_decoder_pairs(steps: int, memory_rows: int, layers: int = 1) -> int:
    """L * sum_{t=1..N} (t^2 + M t): full prefix self-attention plus cross-attention each step."""
    n = steps
    squares = n * (n + 1) * (2 * n + 1) // 6
    linear = n * (n + 1) // 2
    return layers * (squares + memory_rows * linear)


def cached_decoder_pairs(steps: int, memory_rows: int, layers: int = 1) -> int:
    """L * (sum_{t=1..N} t + M N): one query row per layer per step."""
    n = steps
    return layers * (n * (n + 1) // 2 + memory_rows * n)


def predicted_pairs(engine: Engine, steps: int, memory_rows: int, layers: int = 1) -> int:
    if Engine(engine) == Engine.CACHED:
        return cached_decoder_pairs(steps, memory_rows, layers)
    return naive_decoder_pairs(steps, memory_rows, layers)


def growth_ratio(engine: Engine, small: int, large: int, memory_rows: int) -> float:
    """Closed-form cost ratio between two step counts."""
    return predicted_pairs(engine, large, memory_rows) / predicted_pairs(engine, small, memory_rows)


def check_cost_law(result: DecodeResult, steps: int, memory_rows: int, layers: int) -> int:
    """Exact equality of the measured decoder count with its closed form."""
    predicted = predicted_pairs(result.engine, steps, memory_rows, layers)
    measured = result.counter.decoder_qk_pairs
    if measured != predicted or result.counter.decode_steps != steps:
        raise CostLawViolationError(result.engine.value, steps, measured, predicted)
    return predicted


def _check_same_tokens(steps: int, left: DecodeResult, right: DecodeResult) -> None:
    if left.tokens != right.tokens:
        raise EngineMismatchError(steps, left.tokens, right.tokens)


def bench_from_memory(
    memory: EncoderMemory,
    cfg: DecoderConfig,
    weights: Mapping[str, Tensor],
    steps: int,
) -> List[DecodeResult]:
    """Full-prefix and cached decoding of exactly ``steps`` tokens against one fixed memory."""
    full = greedy_decode_from_memory(memory, cfg, weights, Engine.MEMORY, steps, suppress_eos=True)
    cached = greedy_decode_from_memory(memory, cfg, weights, Engine.CACHED, steps, suppress_eos=True)
    _check_same_tokens(steps, full, cached)
    for result in (full, cached):
        check_cost_law(result, steps, memory.rows, cfg.layers)
    return [full, cached]


def bench_decode(
    model: CaptionModel,
    image: Tensor,
    step_targets: Iterable[int],
    include_memory_engine: bool = False,
) -> List[BenchRow]:
    """Run every engine to exactly N steps (EOS suppressed) for each N."""
    memory_rows = model.config.encoder.memory_rows
    layers = model.config.decoder.layers
    rows: List[BenchRow] = []
    for steps in step_targets:
        naive = greedy_decode(model, image, Engine.NAIVE, steps, suppress_eos=True)
        cached = greedy_decode(model, image, Engine.CACHED, steps, suppress_eos=True)
        _check_same_tokens(steps, naive, cached)
        row = {
            "steps": steps,
            "memory_rows": memory_rows,
            "decoder_layers": layers,
            "naive_pairs": naive.counter.decoder_qk_pairs,
            "naive_predicted": check_cost_law(naive, steps, memory_rows, layers),
            "naive_encoder_calls": naive.counter.encoder_calls,
            "naive_seconds": naive.seconds,
            "cached_pairs": cached.counter.decoder_qk_pairs,
            "cached_predicted": check_cost_law(cached, steps, memory_rows, layers),
            "cached_encoder_calls": cached.counter.encoder_calls,
            "cached_seconds": cached.seconds,
        }
        if include_memory_engine:
            middle = greedy_decode(model, image, Engine.MEMORY, steps, suppress_eos=True)
            _check_same_tokens(steps, naive, middle)
            row["memory_pairs"] = middle.counter.decoder_qk_pairs
            row["memory_predicted"] = check_cost_law(middle, steps, memory_rows, layers)
            row["memory_seconds"] = middle.seconds
        rows.append(BenchRow(**row))
        logger.info(
            "bench_step_count_done",
            steps=steps,
            naive_pairs=row["naive_pairs"],
            cached_pairs=row["cached_pairs"],
        )
    return rows


def format_bench_table(rows: Sequence[BenchRow]) -> str:
    """Fixed-width text table; wall times are informational."""
    with_memory = any(row.memory_pairs is not None for row in rows)
    header = ["N", "M", "L", "naive_qk", "naive_pred", "naive_enc", "naive_s"]
    if with_memory:
        header += ["memory_qk", "memory_pred", "memory_s"]
    header += ["cached_qk", "cached_pred", "cached_enc", "cached_s", "ratio"]
    table = [header]
    for row in rows:
        line = [
            str(row.steps),
            str(row.memory_rows),
            str(row.decoder_layers),
            str(row.naive_pairs),
            str(row.naive_predicted),
            str(row.naive_encoder_calls),
            f"{row.naive_seconds:.4f}",
        ]
        if with_memory:
            line += [str(row.memory_pairs), str(row.memory_predicted), f"{row.memory_seconds:.4f}"]
        ratio = row.naive_pairs / row.cached_pairs if row.cached_pairs else float("nan")
        line += [
            str(row.cached_pairs),
            str(row.cached_predicted),
            str(row.cached_encoder_calls),
            f"{row.cached_seconds:.4f}",
            f"{ratio:.2f}",
        ]
        table.append(line)
    widths = [max(len(line[i]) for line in table) for i in range(len(header))]
    return "\n".join("  ".join(cell.rjust(width) for cell, width in zip(line, widths)) for line in table)
