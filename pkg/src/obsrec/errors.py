"""Exception types shared across the package."""


class ObsrecError(Exception):
    """Base class for all package errors."""


class PhaseSpaceMismatch(ObsrecError, TypeError):
    """A state does not belong to the phase space of the system or observable."""


class AllocationLimitError(ObsrecError, MemoryError):
    """Materializing an orbit would exceed the configured buffer limit."""


class InsufficientDataError(ObsrecError, ValueError):
    """Too few usable points for a regression.

    ``largest_usable`` carries the largest radius that still passed the
    statistical floor (``None`` when nothing did).
    """

    def __init__(self, message, largest_usable=None):
        super().__init__(message)
        self.largest_usable = largest_usable


class UndefinedRatioError(ObsrecError, ValueError):
    """Ratio of ball masses with an empty inner ball."""


class NotFoundError(ObsrecError, LookupError):
    """A finite scan did not find the requested index."""


class InvariantViolation(ObsrecError, AssertionError):
    """A mathematically guaranteed bound failed at run time."""


class ConfigError(ObsrecError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DimensionMismatch(ObsrecError, ValueError):
    """Points do not have the dimension the observable or metric expects."""
