"""Exception hierarchy shared by the integrators, solvers and harness."""

from __future__ import annotations


class DLNError(Exception):
    """Base class for every error raised by this package."""


class InvalidStepError(DLNError, ValueError):
    pass


class InvalidParameterError(DLNError, ValueError):
    pass


class DegenerateWindowError(DLNError, ValueError):
    """The step window makes ``1 + eps*theta`` vanish (beta and a blow up)."""


class SolverError(DLNError, RuntimeError):
    pass


class ConvergenceError(SolverError):
    """Iteration budget exhausted; carries the last iterate for diagnosis."""

    def __init__(self, message, last_iterate=None, residual_norm=float("nan"),
                 iterations=0, history=()):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.history = list(history)


class DivergenceError(ConvergenceError):
    """Iterates became NaN or infinite."""


class SingularJacobianError(SolverError):
    pass


class StepFailure(DLNError, RuntimeError):
    """A time step could not be completed.

    ``cause`` is the underlying solver error, ``ledger`` (if any) holds the rows
    accumulated before the failure so a run can be inspected after an abort.
    """

    def __init__(self, message, cause=None, last_iterate=None,
                 residual_norm=float("nan"), history=(), ledger=None):
        super().__init__(message)
        self.cause = cause
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.history = list(history)
        self.ledger = ledger
