"""Exception hierarchy shared across the package."""


class ProtoResError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ProtoResError):
    """An array argument has the wrong shape or length."""


class SkeletonError(ProtoResError):
    """Skeleton definition violates a structural invariant."""


class DegenerateRotation(ProtoResError):
    """6D rotation input cannot be orthonormalized (zero or parallel vectors)."""

    def __init__(self, message: str, norm: float | None = None):
        super().__init__(message)
        self.norm = norm


class DegenerateLookAt(ProtoResError):
    """Look-at target coincides with the joint or direction has zero length."""


class DomainError(ProtoResError):
    """Scalar argument outside its valid domain."""


class ConfigError(ProtoResError):
    """Invalid configuration value or combination."""


class EmptyInput(ProtoResError):
    """An operation received an empty effector set."""


class NumericalError(ProtoResError):
    """A loss or gradient became non-finite."""


class FormatError(ProtoResError):
    """A binary or structured file does not match its expected format."""


class DataError(ProtoResError):
    """File content parsed but failed a semantic validity check."""


class NotFound(ProtoResError):
    """A referenced model or resource does not exist."""


class BadRequest(ProtoResError):
    """A service request failed validation."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
