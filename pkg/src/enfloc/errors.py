"""Exception hierarchy shared by every enfloc module."""


class EnfLocError(Exception):
    """Base class for all enfloc errors."""


class ConfigurationError(EnfLocError, ValueError):
    """A parameter or parameter combination is invalid."""


class InsufficientDataError(EnfLocError, ValueError):
    """Not enough samples/frames for the requested operation."""


class InputFormatError(EnfLocError, ValueError):
    """A file could not be parsed."""


class DegenerateFrameError(EnfLocError):
    """A frame carries no usable tone (constant, all-zero, rank-deficient)."""

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


class DegenerateSegmentError(EnfLocError):
    """A correlation segment has zero energy."""


class DegenerateSlopeError(EnfLocError):
    """Linear distance interpolation with equal reference correlations."""


class DegenerateConstraintError(EnfLocError):
    """Two anchors coincide, so no bisector exists."""


class OutOfDomainError(EnfLocError, ValueError):
    """A point lies outside the localization domain."""


class SchemeCoverageError(EnfLocError, ValueError):
    """A correlation value falls in no quantization bin."""


class FittingError(EnfLocError, ValueError):
    """A quantization scheme could not be fitted."""
