"""Built-in run presets.

``tiny`` is a desk-scale model that trains on one CPU core in minutes;
``paper`` carries the published hyperparameters.
"""

from __future__ import annotations

from typing import Any, Dict

from core.foundation import ConfigurationError

PRESETS: Dict[str, Dict[str, Any]] = {
    "tiny": {
        "image_size": 64,
        "patch_size": 16,
        "channels": 1,
        "model_dim": 64,
        "encoder_layers": 2,
        "decoder_layers": 2,
        "heads": 4,
        "ffn_dim": 256,
        "max_len": 300,
        "pe_base": 10000.0,
        "encoder_norm": "pre",
        "dropout": 0.0,
        "epochs": 10,
        "lr": 1e-3,
        "decay": 0.5,
        "batch_size": 8,
    },
    "paper": {
        "image_size": 384,
        "patch_size": 16,
        "channels": 1,
        "model_dim": 512,
        "encoder_layers": 12,
        "decoder_layers": 12,
        # 12 heads do not divide D=512; 8 keeps the head width at 64.
        "heads": 8,
        "ffn_dim": 2048,
        "max_len": 300,
        "pe_base": 10000.0,
        "encoder_norm": "pre",
        "dropout": 0.1,
        "epochs": 10,
        "lr": 3e-5,
        "decay": 0.5,
        "batch_size": 64,
    },
}


def preset_values(name: str) -> Dict[str, Any]:
    """Return a copy of one preset's flat key/value table."""
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigurationError("preset", f"unknown preset '{name}'; expected one of {sorted(PRESETS)}") from None
