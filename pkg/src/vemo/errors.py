"""Exception hierarchy shared by every vemo module."""


class VemoError(Exception):
    """Base class for all package errors."""


class ShapeError(VemoError, ValueError):
    """An array does not have the shape an operation requires."""


class LengthError(VemoError, ValueError):
    """A sequence is too short (or mismatched in length) for an operation."""


class InsufficientDataError(LengthError):
    """A run is too short to produce even one training window."""


class ValidationError(VemoError, ValueError):
    """Telemetry failed schema, timestamp, domain or standstill validation."""


class SchemaError(ValidationError):
    pass


class TimestampError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class StandstillError(ValidationError):
    pass


class ArtifactError(VemoError):
    """A binary artifact (checkpoint, dataset cache) is unreadable or inconsistent."""


class FormatVersionError(ArtifactError):
    pass


class StructureError(ArtifactError):
    pass


class ArtifactMismatchError(ArtifactError):
    """A checkpoint and a dataset (or config) disagree on k, scaling or architecture."""

    def __init__(self, message, diff=None):
        super().__init__(message)
        self.diff = dict(diff or {})


class NonFiniteGradientError(VemoError, FloatingPointError):
    pass


class DivergenceError(VemoError, FloatingPointError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log
