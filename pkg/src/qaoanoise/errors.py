"""Exception hierarchy shared by all modules."""


class QaoaNoiseError(Exception):
    """Base class for package errors."""


class ValidationError(QaoaNoiseError, ValueError):
    """Input violates a documented invariant or precondition."""


class ResourceLimitError(QaoaNoiseError):
    """Requested computation exceeds a configured size cap or budget."""


class UnsupportedNoiseError(QaoaNoiseError):
    """Noise model cannot be handled by the requested engine (e.g. non-unitary Kraus)."""


class PreconditionError(QaoaNoiseError, ValueError):
    """Data is not in the state an operation requires (e.g. a sampled curve where exact is needed)."""


class FitError(QaoaNoiseError):
    """Least-squares fit failed to converge.

    The best iterate found is kept on ``best`` so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UndefinedExponentError(QaoaNoiseError, ValueError):
    """Power-law exponent is undefined for the given fit (zero ideal cost)."""
