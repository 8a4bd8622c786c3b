"""Exception types shared across the package."""


class RoughScatterError(Exception):
    """Base class for package errors. ``code`` is a short machine-readable tag."""

    code = "error"


class HypothesisError(RoughScatterError, ValueError):
    """A structural assumption required by a stability result does not hold."""

    code = "hypothesis-violated"


class SolverError(RoughScatterError, RuntimeError):
    """A linear solve failed or an iterative method did not converge.

    Parameters
    ----------
    message : str
        Human readable description.
    residuals : list of float, optional
        Residual history recorded before the failure.
    """

    code = "solver-failure"

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
