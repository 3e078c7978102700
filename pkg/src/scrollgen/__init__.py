"""Layered, window-fused latent denoising for wide story scrolls."""

from scrollgen.errors import (
    ConfigError,
    DimensionError,
    GenerationError,
    ParameterError,
    PredictionError,
    PromptParseError,
    TransportError,
)
from scrollgen.types import (
    BoundingBox,
    LatentCanvas,
    Layout,
    Scene,
    SceneObject,
    TimestepSchedule,
    WindowRect,
    region_of,
)

__all__ = [
    "BoundingBox",
    "ConfigError",
    "DimensionError",
    "GenerationError",
    "LatentCanvas",
    "Layout",
    "ParameterError",
    "PredictionError",
    "PromptParseError",
    "Scene",
    "SceneObject",
    "TimestepSchedule",
    "TransportError",
    "WindowRect",
    "region_of",
]

__version__ = "0.1.0"
