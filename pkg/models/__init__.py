"""Data models for molcap"""

from .schemas import (
    AugmentParams,
    BenchRow,
    DecoderConfig,
    EncoderConfig,
    Engine,
    EvalReport,
    EvalSample,
    ManifestRow,
    ModelConfig,
    NormPlacement,
    Preset,
    RunConfig,
    RunValues,
    SampleManifest,
    TrainConfig,
    TrainResult,
)

__all__ = [
    "AugmentParams",
    "BenchRow",
    "DecoderConfig",
    "EncoderConfig",
    "Engine",
    "EvalReport",
    "EvalSample",
    "ManifestRow",
    "ModelConfig",
    "NormPlacement",
    "Preset",
    "RunConfig",
    "RunValues",
    "SampleManifest",
    "TrainConfig",
    "TrainResult",
]
