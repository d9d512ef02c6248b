"""Exception types shared across the package."""


class BoxflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(BoxflowError):
    """Invalid grid, solver, or study parameters."""


class DomainTooSmallError(ConfigurationError):
    """The requested box cannot accommodate the data (e.g. support >= alpha)."""


class GridCompatibilityError(ConfigurationError):
    """Two grids that must share a lattice do not."""


class UsageError(BoxflowError):
    """An operation was applied to an argument of the wrong kind."""


class DataError(BoxflowError):
    """Field data violates a precondition (non-finite, nonzero mean, ...)."""


class SupportError(DataError):
    """Field support leaks outside the region the caller promised."""


class StepSizeError(BoxflowError):
    """Time step violates the advective CFL bound.

    Carries a workable replacement in ``suggested_dt``.
    """

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class BlowUpError(BoxflowError):
    """The solution left the trusted regime (NaN/Inf or threshold crossing).

    ``last_valid_time`` is the latest time with finite, in-threshold state.
    """

    def __init__(self, message: str, last_valid_time: float):
        super().__init__(message)
        self.last_valid_time = last_valid_time
