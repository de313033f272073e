"""Exception hierarchy shared by every subsystem.

The CLI maps these onto process exit codes, so library code raises the most
specific class that applies instead of returning error values.
"""


class EmotionGANError(Exception):
    """Base class for all package errors."""


class ConfigError(EmotionGANError, ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(EmotionGANError, ValueError):
    """Rejected input data: shapes, manifests, missing files (exit code 3)."""


class NumericAbort(EmotionGANError, FloatingPointError):
    """A non-finite loss or gradient was produced during training (exit code 4)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ScorerMissingError(EmotionGANError, RuntimeError):
    """The configured expression-scorer backend cannot be loaded."""


class ExtractorUnavailableError(EmotionGANError, RuntimeError):
    """The perceptual feature extractor cannot be constructed."""


class CheckpointError(EmotionGANError, RuntimeError):
    """A checkpoint is missing, corrupt, or incompatible with the config."""


class NotFittedError(EmotionGANError, RuntimeError):
    """Inference was requested from networks that were never trained or loaded."""
