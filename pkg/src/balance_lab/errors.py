"""Exception types shared across the package.

The CLI maps these onto process exit codes (2 usage, 3 numerical, 4 budget).
"""


class UsageError(ValueError):
    """Bad arguments, malformed input files or violated preconditions."""


class NumericalError(RuntimeError):
    """Base class for solver and integrator failures."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Relative residual at the last iterate.
    iterations : int
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IntegrationStallError(NumericalError):
    """Step size underflowed before the blow-up threshold was reached."""

    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = t
        self.state = state


class BudgetExhaustedError(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved or {}
