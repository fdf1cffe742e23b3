"""Exception types shared across the package."""


class RipgnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RipgnError):
    """Invalid or infeasible configuration input."""


class GeometryError(RipgnError):
    """Mesh or element geometry is invalid."""


class DomainError(RipgnError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SolveError(RipgnError):
    """A linear solve or factorization failed."""


class DivergenceError(RipgnError):
    """An iteration produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
