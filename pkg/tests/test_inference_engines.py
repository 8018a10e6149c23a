"""Greedy decoding engines: equivalence, cache behavior and exact work counts."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import random_image, random_model
from core.foundation import CacheInvariantError, ConfigurationError
from models.schemas import Engine
from services.autodiff import Tensor
from services.caption_decoder import decode_forward
from services.inference_service import (
    DecodeCache,
    argmax_lowest,
    greedy_decode,
    greedy_decode_cached,
    greedy_decode_from_memory,
    greedy_decode_naive,
    step_cached,
)
from services.op_counter import OpCounter
from services.tokenizer import EOS_ID, SOS_ID
from services.vit_encoder import EncoderMemory


def _memory(rows, dim=16, seed=0):
    return EncoderMemory(Tensor(np.random.default_rng(seed).standard_normal((rows, dim))))


def _force_eos_bias(model, value):
    model.weights["dec.out.b"].data[EOS_ID] = value


# ---------------------------------------------------------------------------
# Token choice
# ---------------------------------------------------------------------------


def test_argmax_ties_go_to_the_lowest_id():
    assert argmax_lowest(np.array([0.5, 2.0, 2.0, 1.0])) == 1


@pytest.mark.parametrize("seed", range(20))
def test_cached_engine_emits_the_naive_tokens(seed):
    model = random_model(seed=seed, scale=25.0, dec_layers=1 + seed % 2)
    image = random_image(model.config, seed=100 + seed)

    naive = greedy_decode_naive(model, image, max_steps=32)
    cached = greedy_decode_cached(model, image, max_steps=32)
    middle = greedy_decode(model, image, Engine.MEMORY, max_steps=32)

    assert cached.tokens == naive.tokens
    assert middle.tokens == naive.tokens
    assert naive.tokens[0] == SOS_ID


def test_encoder_runs_once_for_cached_and_every_step_for_naive(tiny_model, tiny_image):
    _force_eos_bias(tiny_model, -1e6)

    naive = greedy_decode_naive(tiny_model, tiny_image, max_steps=7)
    cached = greedy_decode_cached(tiny_model, tiny_image, max_steps=7)

    assert naive.counter.encoder_calls == 7
    assert cached.counter.encoder_calls == 1
    assert naive.counter.decode_steps == cached.counter.decode_steps == 7


# ---------------------------------------------------------------------------
# Stopping
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("engine", [Engine.NAIVE, Engine.CACHED])
def test_forced_eos_stops_after_one_step(tiny_model, tiny_image, engine):
    _force_eos_bias(tiny_model, 1e6)

    result = greedy_decode(tiny_model, tiny_image, engine)

    assert result.tokens == [SOS_ID, EOS_ID]
    assert result.counter.decode_steps == 1


@pytest.mark.parametrize("engine", [Engine.NAIVE, Engine.CACHED])
def test_model_without_eos_stops_at_max_len(engine):
    model = random_model(seed=4, scale=25.0, max_len=6)
    _force_eos_bias(model, -1e6)

    result = greedy_decode(model, random_image(model.config, seed=1), engine)

    assert len(result.generated) == 6
    assert EOS_ID not in result.tokens


def test_suppressed_eos_runs_exactly_the_requested_steps(tiny_model, tiny_image):
    _force_eos_bias(tiny_model, 1e6)

    result = greedy_decode_cached(tiny_model, tiny_image, max_steps=5, suppress_eos=True)

    assert len(result.generated) == 5
    assert EOS_ID not in result.tokens


def test_step_budget_cannot_exceed_max_len(tiny_model, tiny_image):
    with pytest.raises(ConfigurationError):
        greedy_decode_cached(tiny_model, tiny_image, max_steps=tiny_model.config.decoder.max_len + 1)


# ---------------------------------------------------------------------------
# Work counts
# ---------------------------------------------------------------------------


def test_four_steps_over_ten_memory_rows():
    model = random_model(seed=5, scale=25.0)
    memory = _memory(10)
    cfg = model.config.decoder

    full = greedy_decode_from_memory(memory, cfg, model.weights, Engine.MEMORY, 4, suppress_eos=True)
    cached = greedy_decode_from_memory(memory, cfg, model.weights, Engine.CACHED, 4, suppress_eos=True)

    assert full.counter.decoder_qk_pairs == 130
    assert cached.counter.decoder_qk_pairs == 50
    assert full.tokens == cached.tokens


def test_cached_step_charges_history_plus_memory_per_layer():
    model = random_model(seed=6, dec_layers=2)
    memory = _memory(7)
    cache = DecodeCache(2)
    counter = OpCounter()

    for t, token in enumerate([SOS_ID, 4, 5, 6], start=1):
        before = counter.decoder_qk_pairs
        step_cached(cache, token, memory, model.config.decoder, model.weights, counter)
        assert counter.decoder_qk_pairs - before == 2 * (t + 7)


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------


def test_first_cached_step_equals_full_forward_of_sos():
    model = random_model(seed=7)
    memory = _memory(5)

    logits = step_cached(DecodeCache(1), SOS_ID, memory, model.config.decoder, model.weights)
    full = decode_forward([SOS_ID], memory, model.config.decoder, model.weights)

    np.testing.assert_allclose(logits.data[0], full.data[0], atol=1e-6)


def test_every_cached_step_matches_the_full_forward_row():
    model = random_model(seed=8, dec_layers=2, scale=5.0)
    memory = _memory(5, seed=9)
    cfg = model.config.decoder
    tokens = [SOS_ID, 3, 7, 7, 4, 9, 5]
    cache = DecodeCache(cfg.layers)

    full = decode_forward(tokens, memory, cfg, model.weights).data

    for t, token in enumerate(tokens):
        logits = step_cached(cache, token, memory, cfg, model.weights).data[0]
        np.testing.assert_allclose(logits, full[t], atol=1e-4)
    assert cache.row_counts() == [len(tokens)] * (cfg.layers + 1)
    cache.verify()


@pytest.mark.parametrize("case", range(50))
def test_random_prefixes_match_the_full_forward(case):
    rng = np.random.default_rng(500 + case)
    model = random_model(seed=case % 5, dec_layers=1 + case % 2)
    memory = _memory(int(rng.integers(1, 17)), seed=case)
    cfg = model.config.decoder
    tokens = [SOS_ID] + rng.integers(3, 10, size=int(rng.integers(0, 15))).tolist()
    cache = DecodeCache(cfg.layers)

    full = decode_forward(tokens, memory, cfg, model.weights).data

    for t, token in enumerate(tokens):
        logits = step_cached(cache, token, memory, cfg, model.weights).data[0]
        np.testing.assert_allclose(logits, full[t], atol=1e-4)


def test_decode_leaves_an_aligned_cache(tiny_model, tiny_image):
    result = greedy_decode_cached(tiny_model, tiny_image, max_steps=6, suppress_eos=True)

    assert result.cache.row_counts() == [6] * (tiny_model.config.decoder.layers + 1)


def test_cached_rows_are_read_only():
    cache = DecodeCache(1)
    cache.append(-1, np.ones(4))

    stored = cache._rows[-1][0]

    with pytest.raises(ValueError):
        stored[0] = 5.0


def test_verify_detects_a_replaced_row():
    cache = DecodeCache(1)
    cache.append(-1, np.ones(4))
    cache.append(0, np.ones(4))

    cache._rows[0][0] = np.zeros(4)

    with pytest.raises(CacheInvariantError):
        cache.verify()


def test_misaligned_cache_is_rejected():
    model = random_model(seed=0)
    cache = DecodeCache(1)
    cache.append(-1, np.zeros(16))

    with pytest.raises(CacheInvariantError):
        step_cached(cache, SOS_ID, _memory(5), model.config.decoder, model.weights)


def test_cache_depth_must_match_decoder():
    model = random_model(seed=0, dec_layers=2)

    with pytest.raises(CacheInvariantError):
        step_cached(DecodeCache(1), SOS_ID, _memory(5), model.config.decoder, model.weights)
