"""Exception hierarchy shared across the package."""


class DrppError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DrppError, ValueError):
    pass


class ConcavityViolation(DrppError):
    """Raised when the inner problem is not certifiably strongly concave."""


class StateError(DrppError):
    pass


class Unsupported(DrppError, NotImplementedError):
    pass


class NonConvergence(DrppError):
    """An iterative solver ran out of iterations.

    The best iterate and the certificate it reached are kept on the exception
    so callers can decide whether the partial answer is usable.
    """

    def __init__(self, message, best=None, gap=None):
        super().__init__(message)
        self.best = best
        self.gap = gap


class IngestionError(DrppError, ValueError):
    pass


class ConvexityViolation(DrppError):
    """Raised when the outer argmin is not certifiably strongly convex."""
