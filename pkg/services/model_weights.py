"""Named parameter table for the encoder-decoder model."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import structlog
from scipy.stats import truncnorm

from core.foundation import CheckpointError
from models.schemas import ModelConfig
from services.autodiff import Tensor

logger = structlog.get_logger()

INIT_STD = 0.02


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every parameter name with its shape, in construction order."""
    enc, dec = config.encoder, config.decoder
    d = enc.model_dim
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()

    def attention(prefix: str) -> None:
        for part in ("w_q", "w_k", "w_v", "w_o"):
            shapes[f"{prefix}.{part}"] = (d, d)

    def norm(prefix: str) -> None:
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ffn(prefix: str, hidden: int) -> None:
        shapes[f"{prefix}.w1"] = (d, hidden)
        shapes[f"{prefix}.b1"] = (hidden,)
        shapes[f"{prefix}.w2"] = (hidden, d)
        shapes[f"{prefix}.b2"] = (d,)

    shapes["enc.patch_proj.w"] = (enc.patch_dim, d)
    shapes["enc.patch_proj.b"] = (d,)
    shapes["enc.cls"] = (1, d)
    shapes["enc.pos"] = (enc.memory_rows, d)
    for i in range(enc.layers):
        norm(f"enc.layers.{i}.ln1")
        attention(f"enc.layers.{i}.attn")
        norm(f"enc.layers.{i}.ln2")
        ffn(f"enc.layers.{i}.ffn", enc.ffn_dim)
    norm("enc.ln_f")

    shapes["dec.tok_emb"] = (dec.vocab_size, d)
    for i in range(dec.layers):
        attention(f"dec.layers.{i}.self_attn")
        norm(f"dec.layers.{i}.ln1")
        attention(f"dec.layers.{i}.cross_attn")
        norm(f"dec.layers.{i}.ln2")
        ffn(f"dec.layers.{i}.ffn", dec.ffn_dim)
        norm(f"dec.layers.{i}.ln3")
    shapes["dec.out.w"] = (d, dec.vocab_size)
    shapes["dec.out.b"] = (dec.vocab_size,)
    return shapes


def _is_gain(name: str) -> bool:
    return name.endswith(".g")


def _is_bias(name: str) -> bool:
    return name.endswith((".b", ".b1", ".b2"))


class ModelWeights(Mapping[str, Tensor]):
    """Ordered name -> Tensor table; iteration order is construction order."""

    def __init__(self, tensors: Mapping[str, Tensor]):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"no parameter named '{name}'") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def parameters(self) -> List[Tensor]:
        return list(self._tensors.values())

    def parameter_count(self) -> int:
        return sum(int(t.data.size) for t in self._tensors.values())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def check_shapes(self, config: ModelConfig, source: str = "<memory>") -> None:
        """Raise CheckpointError unless names and shapes match ``config`` exactly."""
        expected = parameter_shapes(config)
        missing = [name for name in expected if name not in self._tensors]
        extra = [name for name in self._tensors if name not in expected]
        if missing or extra:
            raise CheckpointError(source, f"tensor names differ from config (missing={missing[:3]}, extra={extra[:3]})")
        for name, shape in expected.items():
            if self._tensors[name].shape != shape:
                raise CheckpointError(
                    source, f"tensor '{name}' has shape {self._tensors[name].shape}, config expects {shape}"
                )


@dataclass
class CaptionModel:
    """Config plus weights: everything needed to encode and decode."""

    config: ModelConfig
    weights: ModelWeights

    def __post_init__(self) -> None:
        self.weights.check_shapes(self.config)


def init_weights(config: ModelConfig, seed: int = 0, dtype: Optional[type] = np.float32) -> ModelWeights:
    """Truncated-normal projections and embeddings, zero biases, unit LN gains."""
    rng = np.random.default_rng(seed)
    tensors: Dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if _is_gain(name):
            data = np.ones(shape)
        elif _is_bias(name):
            data = np.zeros(shape)
        else:
            data = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=INIT_STD, size=shape, random_state=rng)
        tensors[name] = Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name, dtype=dtype)
    weights = ModelWeights(tensors)
    logger.debug("weights_initialized", parameters=weights.parameter_count(), seed=seed)
    return weights


def build_model(config: ModelConfig, seed: int = 0) -> CaptionModel:
    return CaptionModel(config=config, weights=init_weights(config, seed))
