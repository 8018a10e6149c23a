"""Shared test configuration."""
from __future__ import annotations

import numpy as np
import pytest

from models.schemas import DecoderConfig, EncoderConfig, ModelConfig
from services.autodiff import Tensor
from services.model_weights import CaptionModel, init_weights


def small_config(
    dim: int = 16,
    enc_layers: int = 1,
    dec_layers: int = 1,
    heads: int = 2,
    image_size: int = 32,
    patch_size: int = 16,
    vocab_size: int = 10,
    max_len: int = 40,
    norm: str = "pre",
) -> ModelConfig:
    return ModelConfig(
        encoder=EncoderConfig(
            image_size=image_size,
            patch_size=patch_size,
            model_dim=dim,
            layers=enc_layers,
            heads=heads,
            norm=norm,
            dropout=0.0,
        ),
        decoder=DecoderConfig(
            model_dim=dim,
            layers=dec_layers,
            heads=heads,
            vocab_size=vocab_size,
            max_len=max_len,
            dropout=0.0,
        ),
    )


def random_model(seed: int = 0, scale: float = 1.0, **overrides) -> CaptionModel:
    """Small model; ``scale`` inflates the init so argmax choices are not near-ties."""
    config = small_config(**overrides)
    weights = init_weights(config, seed)
    if scale != 1.0:
        for name, tensor in weights.items():
            if not name.endswith((".g", ".b", ".b1", ".b2")):
                tensor.data *= np.float32(scale)
    return CaptionModel(config=config, weights=weights)


def random_image(config: ModelConfig, seed: int = 0) -> Tensor:
    side = config.encoder.image_size
    rng = np.random.default_rng(seed)
    return Tensor(rng.random((side, side, config.encoder.channels)))


@pytest.fixture
def tiny_model() -> CaptionModel:
    return random_model(seed=3, scale=25.0)


@pytest.fixture
def tiny_image(tiny_model) -> Tensor:
    return random_image(tiny_model.config, seed=11)
