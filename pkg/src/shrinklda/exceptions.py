"""Exception types raised across the package."""


class InvalidInput(ValueError):
    """Input contains non-finite values or is outside the allowed domain."""


class NotPositiveDefinite(ValueError):
    """A matrix that must be positive definite is not."""


class InsufficientData(ValueError):
    """Too few observations to fit the requested estimator."""


class ShapeMismatch(ValueError):
    """Array dimensions do not agree."""


class IngestError(ValueError):
    """A dataset file could not be parsed into a labelled dataset."""


class ConvergenceFailure(RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    Attributes
    ----------
    last_iterate : ndarray
        The final iterate the solver produced.
    residual : float
        Convergence metric at the final iterate.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
