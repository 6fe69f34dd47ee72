"""Eight-architecture model zoo for CSI window classification.

All models share one forward contract: (B, L, C) float input -> (B, K) logits.
"""

from .zoo import (
    FAMILIES,
    ModelConfig,
    build_model,
    config_string,
    count_params,
    load_weights,
    save_weights,
)

__all__ = [
    "FAMILIES",
    "ModelConfig",
    "build_model",
    "config_string",
    "count_params",
    "load_weights",
    "save_weights",
]
