"""Configuration management for molcap"""

from functools import lru_cache
from typing import Any

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide knobs with environment variable support.

    Model, training and augmentation values live in presets and the resolved
    RunConfig; this class only carries what every subcommand shares.
    """

    model_config = SettingsConfigDict(
        env_prefix="MOLCAP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="json")

    # Numerics
    # Checks every forward op output for NaN/Inf; slow, meant for debugging.
    debug: bool = Field(default=False)

    # Run defaults
    default_preset: str = Field(default="tiny")
    default_seed: int = Field(default=0, ge=0)
    max_decode_len: int = Field(default=300, ge=1)
    grad_clip_norm: float = Field(default=1.0, ge=0.0)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        if v.lower() not in {"json", "console"}:
            raise ValueError("Log format must be 'json' or 'console'")
        return v.lower()

    @field_validator("default_preset", mode="before")
    @classmethod
    def normalize_preset(cls, value: Any) -> Any:
        if isinstance(value, str):
            return value.strip().lower()
        return value


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


# Global settings instance
settings = get_settings()
