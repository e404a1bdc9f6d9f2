"""Contains the exception classes raised throughout synthunits.

Every validation problem raises a subclass of both `SynthUnitsError`
and `ValueError`, so callers that only care about bad input can keep
catching `ValueError`.
"""
from typing import Optional


class SynthUnitsError(Exception):
    """Base class for all synthunits errors."""


class ManifestError(SynthUnitsError, ValueError):
    """Raised for malformed or invalid manifest content.

    Attributes:
        line: The 1-based line number where the problem was found, or
            None if the problem is not tied to a single line.
    """

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        """Inits a ManifestError.

        Args:
            message: The error message.
            line: (Optional.) See `line` attribute.
        """
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)


class InfeasibleSplitError(SynthUnitsError, ValueError):
    """Raised when split constraints cannot be satisfied."""


class FormatError(SynthUnitsError, ValueError):
    """Base class for binary and text file format errors."""


class UnsupportedFormatError(FormatError):
    """Raised for audio that is not 16-bit PCM mono."""


class MagicMismatchError(FormatError):
    """Raised when a file does not start with the expected magic."""


class TruncatedPayloadError(FormatError):
    """Raised when a file ends before its declared payload does.

    Attributes:
        expected: The number of bytes the header declares.
        actual: The number of bytes actually present.
    """

    def __init__(self, message: str, expected: int, actual: int) -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(
            f'{message} (expected {expected} bytes, got {actual})'
        )


class NonFiniteError(FormatError):
    """Raised when numeric data contains NaN or infinite values."""


class AlignmentError(FormatError):
    """Raised when a phone alignment has a gap, overlap or bad extent.

    Attributes:
        frame: The frame index where coverage breaks.
    """

    def __init__(self, message: str, frame: int) -> None:
        self.frame = frame
        super().__init__(message)


class DimensionMismatchError(SynthUnitsError, ValueError):
    """Raised when feature and codebook dimensions disagree."""


class LengthMismatchError(SynthUnitsError, ValueError):
    """Raised when paired sequences have different lengths."""


class UndefinedMetricError(SynthUnitsError, ValueError):
    """Raised when a metric has nothing to average over."""


class StageError(SynthUnitsError, RuntimeError):
    """Raised when a pipeline stage fails.

    Attributes:
        stage: The name of the failing stage.
    """

    def __init__(self, stage: str, message: str) -> None:
        self.stage = stage
        super().__init__(f'stage {stage!r} failed: {message}')


class ConfigError(SynthUnitsError, ValueError):
    """Raised for an invalid or incomplete pipeline config."""
