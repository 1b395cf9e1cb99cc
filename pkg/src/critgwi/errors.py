"""Exception hierarchy."""
from __future__ import annotations


class CritGWIError(Exception):
    """Base class for all package errors."""


class InvalidModel(CritGWIError, ValueError):
    """Parameters do not define an admissible offspring/immigration pair."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NoSolution(InvalidModel):
    """The criticality constraint for the log-corrected family has no valid root."""


class CapExceeded(CritGWIError, RuntimeError):
    """A sampler or simulation ran into its hard size cap.

    ``lower_bound`` is a value the true outcome is known to exceed or equal.
    """

    def __init__(self, message: str, lower_bound: int | None = None):
        super().__init__(message)
        self.lower_bound = lower_bound


class PopCapExceeded(CapExceeded):
    pass


class StepCapExceeded(CapExceeded):
    pass


class GenCapExceeded(CapExceeded):
    pass


class NonConvergence(CritGWIError, ArithmeticError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class TruncationBudgetExceeded(CritGWIError, ArithmeticError):
    pass


class RadiusIllConditioned(CritGWIError, ValueError):
    pass


class NegativeMass(CritGWIError, ArithmeticError):
    pass


class OutOfRange(CritGWIError, IndexError):
    pass


class InfeasibleWindow(CritGWIError, ValueError):
    pass


class UndefinedAsymptotic(CritGWIError, ValueError):
    """The requested asymptotic quantity does not exist for this model family."""


class DegenerateGrid(CritGWIError, ValueError):
    pass
