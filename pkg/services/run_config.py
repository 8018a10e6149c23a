"""Resolve preset, config file and flags into one validated run configuration.

Precedence, lowest first: preset < key=value config file < command-line flags.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from config import get_settings
from config.presets import preset_values
from core.foundation import ConfigurationError
from models.schemas import (
    AugmentParams,
    DecoderConfig,
    EncoderConfig,
    ModelConfig,
    Preset,
    RunConfig,
    RunValues,
    TrainConfig,
)

logger = structlog.get_logger()
settings = get_settings()

KNOWN_KEYS = frozenset(RunValues.model_fields)


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse ``key=value`` lines (``#`` comments allowed); keys are case-insensitive."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("config", f"config file not found: {path}")
    raw = dotenv_values(path)
    values: Dict[str, str] = {}
    for key, value in raw.items():
        normalized = key.strip().lower().replace("-", "_")
        if normalized not in KNOWN_KEYS:
            raise ConfigurationError("config", f"unknown key '{key}' in {path}")
        if value is None or value == "":
            raise ConfigurationError(normalized, f"empty value in {path}")
        values[normalized] = value
    return values


def _first_error(exc: ValidationError) -> Tuple[str, str]:
    error = exc.errors()[0]
    location = ".".join(str(part) for part in error.get("loc", ())) or "config"
    return location, error.get("msg", "invalid value")


def resolve_values(
    preset: str,
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunValues:
    merged: Dict[str, Any] = {"grad_clip_norm": settings.grad_clip_norm, **preset_values(preset)}
    if config_file is not None:
        merged.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigurationError(key, "not a run setting")
        merged[key] = value
    try:
        return RunValues.model_validate(merged)
    except ValidationError as exc:
        setting, message = _first_error(exc)
        raise ConfigurationError(setting, message) from exc


def resolve_run_config(
    command: str,
    preset: str,
    seed: int,
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    paths: Optional[Mapping[str, Any]] = None,
    options: Optional[Mapping[str, Any]] = None,
) -> Tuple[RunConfig, RunValues]:
    """Return the echoable RunConfig together with the typed values it carries."""
    values = resolve_values(preset, config_file, overrides)
    try:
        run = RunConfig(
            command=command,
            preset=Preset(preset),
            seed=seed,
            values=values.model_dump(mode="json"),
            paths={key: str(value) for key, value in (paths or {}).items() if value is not None},
            options=dict(options or {}),
        )
    except (ValidationError, ValueError) as exc:
        raise ConfigurationError("run", str(exc)) from exc
    logger.debug("run_config_resolved", command=command, preset=preset, config_file=str(config_file or ""))
    return run, values


def model_config_from(values: RunValues, vocab_size: int) -> ModelConfig:
    try:
        return ModelConfig(
            encoder=EncoderConfig(
                image_size=values.image_size,
                patch_size=values.patch_size,
                channels=values.channels,
                model_dim=values.model_dim,
                layers=values.encoder_layers,
                heads=values.heads,
                ffn_dim=values.ffn_dim,
                norm=values.encoder_norm,
                dropout=values.dropout,
            ),
            decoder=DecoderConfig(
                model_dim=values.model_dim,
                layers=values.decoder_layers,
                heads=values.heads,
                ffn_dim=values.ffn_dim,
                vocab_size=vocab_size,
                max_len=values.max_len,
                pe_base=values.pe_base,
                dropout=values.dropout,
            ),
        )
    except ValidationError as exc:
        setting, message = _first_error(exc)
        raise ConfigurationError(setting, message) from exc


def train_config_from(values: RunValues, seed: int) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=values.epochs,
            lr=values.lr,
            decay=values.decay,
            batch_size=values.batch_size,
            beta1=values.beta1,
            beta2=values.beta2,
            eps=values.eps,
            grad_clip_norm=values.grad_clip_norm,
            max_steps=values.max_steps,
            holdout=values.holdout,
            seed=seed,
        )
    except ValidationError as exc:
        setting, message = _first_error(exc)
        raise ConfigurationError(setting, message) from exc


def augment_params_from(values: RunValues) -> AugmentParams:
    return AugmentParams(
        sp_density=values.sp_density,
        atom_drop=values.atom_drop,
        double_to_single=values.double_to_single,
        artifact_strokes=values.artifact_strokes,
    )
