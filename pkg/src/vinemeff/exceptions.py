"""Exception hierarchy shared across the package."""


class VineMeffError(Exception):
    """Base class for all package errors."""


class DomainError(VineMeffError, ValueError):
    """An argument lies outside the domain of a function or parameter space."""


class DegenerateError(VineMeffError, ValueError):
    """Data without variation (constant column, empty conditioning event)."""


class StructureError(VineMeffError, ValueError):
    """A vine structure is not a valid regular vine."""


class ConfigurationError(VineMeffError, ValueError):
    """Inconsistent user configuration (e.g. more blocks than coordinates)."""


class OptimizationError(VineMeffError, RuntimeError):
    """A numerical optimizer or root finder failed."""


class CalibrationError(VineMeffError, RuntimeError):
    """The local significance level fixed point did not converge.

    Attributes
    ----------
    trace : list of tuple
        ``(alpha_loc, total_meff, bound)`` for every iteration performed.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
