from typing import Dict, Optional


class MacfsError(Exception):
    """Base class for every error raised by the library."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def to_dict(self) -> Dict:
        """Machine-readable diagnostic."""
        return {
            'error': type(self).__name__,
            'message': self.message,
            'field': self.field,
        }


class ValidationError(MacfsError, ValueError):
    """Invalid parameters, grids, weights or configuration values."""


class NumericalError(MacfsError, RuntimeError):
    """A computation could not be carried out to the requested accuracy."""


class QuadratureError(NumericalError):
    """Quadrature did not converge or the truncation error exceeds its cap."""


class NotPositiveSemidefiniteError(NumericalError):
    """A covariance matrix has a pivot or eigenvalue below the PSD tolerance."""


class SingularOperatorError(NumericalError):
    """The unregularized triangular system is singular; retry with lambda > 0."""


class InconsistentConditioningError(NumericalError):
    """Observed values lie outside the support of a degenerate observed block."""
