"""Consolidated Pydantic schemas for molcap"""

import json
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

# ============================================================================
# ENUMS
# ============================================================================


class Engine(str, Enum):
    """Greedy decoding engines"""

    NAIVE = "naive"  # encoder and full decoder recomputed every step
    MEMORY = "memory"  # encoder once, full decoder every step
    CACHED = "cached"  # encoder once, one new row per decoder layer per step


class NormPlacement(str, Enum):
    """Where LayerNorm sits relative to the residual sum"""

    PRE = "pre"
    POST = "post"


class Preset(str, Enum):
    """Built-in run presets"""

    TINY = "tiny"
    PAPER = "paper"


_FROZEN = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())


# ============================================================================
# MODEL CONFIGURATION
# ============================================================================


class EncoderConfig(BaseModel):
    """Vision transformer encoder hyperparameters"""

    model_config = _FROZEN

    image_size: int = Field(default=384, ge=1)
    patch_size: int = Field(default=16, ge=1)
    channels: int = Field(default=1, ge=1, le=4)
    model_dim: int = Field(default=512, ge=1)
    layers: int = Field(default=12, ge=0)
    heads: int = Field(default=8, ge=1)
    ffn_dim: int = Field(default=0, ge=0)
    norm: NormPlacement = NormPlacement.PRE
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)

    @model_validator(mode="before")
    @classmethod
    def default_ffn_dim(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("ffn_dim"):
            data = {**data, "ffn_dim": 4 * int(data.get("model_dim", 512))}
        return data

    @model_validator(mode="after")
    def check_divisibility(self) -> "EncoderConfig":
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        return self

    @property
    def patches_per_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.patches_per_side**2

    @property
    def memory_rows(self) -> int:
        """N+1: patch rows plus the class token."""
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


class DecoderConfig(BaseModel):
    """Caption decoder hyperparameters"""

    model_config = _FROZEN

    model_dim: int = Field(default=512, ge=2)
    layers: int = Field(default=12, ge=0)
    heads: int = Field(default=8, ge=1)
    ffn_dim: int = Field(default=0, ge=0)
    vocab_size: int = Field(default=275, ge=4)
    max_len: int = Field(default=300, ge=1)
    pe_base: float = Field(default=10000.0, gt=1.0)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)

    @model_validator(mode="before")
    @classmethod
    def default_ffn_dim(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("ffn_dim"):
            data = {**data, "ffn_dim": 4 * int(data.get("model_dim", 512))}
        return data

    @model_validator(mode="after")
    def check_dims(self) -> "DecoderConfig":
        if self.model_dim % 2:
            raise ValueError(f"model_dim {self.model_dim} must be even for sinusoidal encoding")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        return self


class ModelConfig(BaseModel):
    """Full encoder-decoder configuration; serialized into checkpoints"""

    model_config = _FROZEN

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)

    @model_validator(mode="after")
    def check_shared_width(self) -> "ModelConfig":
        if self.encoder.model_dim != self.decoder.model_dim:
            raise ValueError(
                f"encoder width {self.encoder.model_dim} != decoder width {self.decoder.model_dim}"
            )
        return self

    def canonical_json(self) -> str:
        """Key-sorted compact JSON; byte-stable for a given config."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


# ============================================================================
# TRAINING / DATA CONFIGURATION
# ============================================================================


class TrainConfig(BaseModel):
    """Optimizer, schedule and loop settings"""

    model_config = _FROZEN

    epochs: int = Field(default=10, ge=1)
    lr: float = Field(default=3e-5, gt=0.0)
    decay: float = Field(default=0.5, gt=0.0, le=1.0)
    batch_size: int = Field(default=64, ge=1)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    grad_clip_norm: float = Field(default=1.0, ge=0.0)
    max_steps: Optional[int] = Field(default=None, ge=1)
    holdout: bool = False
    seed: int = Field(default=0, ge=0)

    @property
    def decay_enabled(self) -> bool:
        return self.decay != 1.0

    @model_validator(mode="after")
    def check_decay_epochs(self) -> "TrainConfig":
        if self.decay_enabled and self.max_steps is None and self.epochs < 2:
            raise ValueError("epochs must be >= 2 when learning-rate decay is enabled")
        return self


class AugmentParams(BaseModel):
    """Corruption parameters; all zero means identity"""

    model_config = _FROZEN

    sp_density: float = Field(default=0.0, ge=0.0, le=1.0)
    atom_drop: float = Field(default=0.0, ge=0.0, le=1.0)
    double_to_single: float = Field(default=0.0, ge=0.0, le=1.0)
    artifact_strokes: int = Field(default=0, ge=0)

    @property
    def enabled(self) -> bool:
        return any([self.sp_density, self.atom_drop, self.double_to_single, self.artifact_strokes])


class RunConfig(BaseModel):
    """Fully resolved invocation: echoed before any work starts"""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    command: str
    preset: Preset
    seed: int = Field(ge=0)
    values: Dict[str, Any] = Field(default_factory=dict)
    paths: Dict[str, str] = Field(default_factory=dict)
    options: Dict[str, Any] = Field(default_factory=dict)

    def echo_line(self) -> str:
        return "config " + json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


# ============================================================================
# DATA
# ============================================================================


class ManifestRow(BaseModel):
    """One (image, label) sample"""

    image_path: str  # as written in the manifest
    label: str
    line: int = Field(default=0, ge=0)
    resolved_path: Optional[str] = None

    @property
    def path(self) -> str:
        return self.resolved_path or self.image_path


class SampleManifest(BaseModel):
    """Validated list of samples"""

    rows: List[ManifestRow] = Field(default_factory=list)
    source: Literal["synthetic", "external"] = "external"
    path: Optional[str] = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def labels(self) -> List[str]:
        return [row.label for row in self.rows]


# ============================================================================
# REPORTS
# ============================================================================


class EvalSample(BaseModel):
    image_path: str
    label: str
    prediction: str
    distance: int = Field(ge=0)


class EvalReport(BaseModel):
    """Levenshtein evaluation over a manifest"""

    engine: str
    samples: List[EvalSample] = Field(default_factory=list)
    count: int = Field(ge=0)
    mean_distance: float
    exact_match_rate: float

    @classmethod
    def from_samples(cls, engine: str, samples: List[EvalSample]) -> "EvalReport":
        count = len(samples)
        total = sum(sample.distance for sample in samples)
        exact = sum(1 for sample in samples if sample.distance == 0)
        return cls(
            engine=engine,
            samples=samples,
            count=count,
            mean_distance=total / count if count else 0.0,
            exact_match_rate=exact / count if count else 0.0,
        )


class BenchRow(BaseModel):
    """One decode-benchmark line at a fixed step count"""

    steps: int
    memory_rows: int
    decoder_layers: int
    naive_pairs: int
    naive_predicted: int
    naive_encoder_calls: int
    naive_seconds: float
    cached_pairs: int
    cached_predicted: int
    cached_encoder_calls: int
    cached_seconds: float
    memory_pairs: Optional[int] = None
    memory_predicted: Optional[int] = None
    memory_seconds: Optional[float] = None


class TrainResult(BaseModel):
    """Outcome of a training run"""

    steps: int
    epoch_losses: List[float] = Field(default_factory=list)
    validation_losses: List[float] = Field(default_factory=list)
    checkpoint_path: Optional[str] = None


# ============================================================================
# RUN VALUES
# ============================================================================


class RunValues(BaseModel):
    """Flat, validated key=value table merged from preset, config file and flags"""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    image_size: int = Field(ge=1)
    patch_size: int = Field(ge=1)
    channels: int = Field(default=1, ge=1, le=4)
    model_dim: int = Field(ge=2)
    encoder_layers: int = Field(ge=0)
    decoder_layers: int = Field(ge=0)
    heads: int = Field(ge=1)
    ffn_dim: int = Field(default=0, ge=0)
    max_len: int = Field(default=300, ge=2)
    pe_base: float = Field(default=10000.0, gt=1.0)
    encoder_norm: NormPlacement = NormPlacement.PRE
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    epochs: int = Field(default=10, ge=1)
    lr: float = Field(default=3e-5, gt=0.0)
    decay: float = Field(default=0.5, gt=0.0, le=1.0)
    batch_size: int = Field(default=64, ge=1)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    grad_clip_norm: float = Field(default=1.0, ge=0.0)
    max_steps: Optional[int] = Field(default=None, ge=1)
    holdout: bool = False
    sp_density: float = Field(default=0.0, ge=0.0, le=1.0)
    atom_drop: float = Field(default=0.0, ge=0.0, le=1.0)
    double_to_single: float = Field(default=0.0, ge=0.0, le=1.0)
    artifact_strokes: int = Field(default=0, ge=0)
