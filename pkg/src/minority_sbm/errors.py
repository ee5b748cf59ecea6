"""Exception hierarchy shared across the package."""


class MinoritySBMError(Exception):
    """Base class for all package errors."""


class InfeasibleParameters(MinoritySBMError, ValueError):
    """Model parameters violate a structural constraint or push an edge
    probability outside [0, 1]."""


class SolverError(MinoritySBMError, RuntimeError):
    """An iterative eigensolver failed to converge.

    ``best_residual`` holds the largest residual norm of the best iterate.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class GraphFormatError(MinoritySBMError, ValueError):
    """Malformed edge list or sidecar."""


class DimensionMismatch(MinoritySBMError, ValueError):
    """Two objects that must describe the same node set do not."""
