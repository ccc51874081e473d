"""Exception types raised across the package."""


class QSFError(Exception):
    """Base class for all package errors."""


class ValidationError(QSFError, ValueError):
    """Input violates a structural precondition (shape, Hermiticity, trace)."""


class PSDError(ValidationError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class CapacityError(QSFError, RuntimeError):
    """Requested object exceeds the configured simulation cap."""


class NumericalError(QSFError, RuntimeError):
    """Iterative routine failed to converge."""


class ApproximationError(QSFError, RuntimeError):
    """No polynomial of admissible degree meets the requested accuracy."""


class TrainingError(QSFError, RuntimeError):
    """Circuit training did not reach the target infidelity."""


class SearchError(QSFError, RuntimeError):
    """Eigenvalue bisection produced an inconsistent probe trajectory."""
