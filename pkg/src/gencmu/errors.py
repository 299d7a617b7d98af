"""Exception types raised across the package."""


class GencmuError(ValueError):
    """Base class for all validation and numerical errors in this package."""


class CriticalLoadViolation(GencmuError):
    pass


class ScalingViolation(GencmuError):
    pass


class NonpositiveRate(GencmuError):
    pass


class NegativeArgument(GencmuError):
    pass


class OutOfRange(GencmuError):
    pass


class DomainMismatch(GencmuError):
    pass


class BadDelta(GencmuError):
    pass


class NegativePathValue(GencmuError):
    pass


class ToleranceNotMet(GencmuError):
    pass


class ZeroVector(GencmuError):
    pass


class NonFinite(GencmuError):
    pass


class GridTooCoarse(GencmuError):
    pass


class InsufficientReplications(GencmuError):
    pass


class ConfigError(GencmuError):
    """Malformed configuration document."""


class DegenerateVariance(UserWarning):
    """Issued when the projected workload noise has zero variance.

    The reduced game then has nothing to optimize and its value is the
    cost of the undisturbed path, so this is a warning rather than an error.
    """
