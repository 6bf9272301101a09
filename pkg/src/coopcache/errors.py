"""Exception types shared across the package."""


class CoopCacheError(Exception):
    """Base class for all package errors."""


class CapacityError(CoopCacheError, ValueError):
    """An exact computation would exceed the supported enumeration size."""


class DimensionError(CoopCacheError, ValueError):
    """Objects with different user counts were combined."""


class LpNumericalError(CoopCacheError, RuntimeError):
    """The simplex method stalled beyond its iteration cap."""


class InsufficientGroupsError(CoopCacheError):
    """Fewer qualifying groups exist than were requested."""

    def __init__(self, found: int, requested: int, criterion: str = ""):
        self.found = found
        self.requested = requested
        msg = f"insufficient qualifying groups: found {found}, requested {requested}"
        if criterion:
            msg += f" ({criterion})"
        super().__init__(msg)


class TraceError(CoopCacheError, ValueError):
    """Malformed or inconsistent encounter trace."""
