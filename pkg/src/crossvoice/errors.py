"""Exception hierarchy shared across the pipeline."""


class CrossVoiceError(Exception):
    """Base class for all package errors."""


class ConfigError(CrossVoiceError):
    """Invalid configuration value (bad frame spec, lag bounds, dims, ...)."""


class InputError(CrossVoiceError):
    """Invalid runtime input (NaN samples, dim mismatch, unknown token, ...)."""


class ShapeError(CrossVoiceError):
    """Tensor shape mismatch; message names the op and both shapes."""


class DataError(CrossVoiceError):
    """Corpus / manifest / pairing problem (missing file, length mismatch)."""


class OptimizerError(CrossVoiceError):
    """Non-finite gradient or optimizer state corruption."""


class GradCheckError(CrossVoiceError):
    """Gradient check could not be evaluated (non-finite function output)."""


class CompatibilityError(CrossVoiceError):
    """Checkpoint fingerprint does not match the current configuration."""
