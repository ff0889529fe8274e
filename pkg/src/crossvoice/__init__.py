"""Desk-scale cross-lingual voice cloning: text -> bottleneck features ->
acoustic features, with text-free speaker adaptation."""

__version__ = "0.1.0"

from .errors import (
    CompatibilityError,
    ConfigError,
    CrossVoiceError,
    DataError,
    GradCheckError,
    InputError,
    OptimizerError,
    ShapeError,
)

__all__ = [
    "CompatibilityError",
    "ConfigError",
    "CrossVoiceError",
    "DataError",
    "GradCheckError",
    "InputError",
    "OptimizerError",
    "ShapeError",
]
