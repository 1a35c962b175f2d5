"""Exception types raised by the estimators and the CLI."""


class KroncovError(Exception):
    """Base class for numerical failures reported by the library."""


class NotPositiveDefinite(KroncovError):
    """A Cholesky factorization hit a non-positive pivot."""


class AsymmetricMatrix(KroncovError, ValueError):
    pass


class DimensionMismatch(KroncovError, ValueError):
    pass


class SampleSizeTooSmall(KroncovError):
    pass


class DimensionGuard(KroncovError):
    """Full-dimension solve refused because p*f exceeds the configured limit."""


class InvalidTarget(KroncovError, ValueError):
    pass


class MaxSweepsExceeded(KroncovError):
    """Glasso did not meet its stopping rule; carries the best iterate."""

    def __init__(self, message, theta=None, w=None, gap=float("inf"), sweeps=0):
        super().__init__(message)
        self.theta = theta
        self.w = w
        self.gap = gap
        self.sweeps = sweeps
