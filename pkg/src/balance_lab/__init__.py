"""Structural-balance edge-sign inference, fracture prediction, contagion
early warning and game-theoretic predictive defense."""
from .errors import (BudgetExhaustedError, ConvergenceError, IntegrationStallError, NumericalError,
                     UsageError)
from .numerics import RandomSource, as_source

__version__ = "0.1.0"

__all__ = [
    "BudgetExhaustedError",
    "ConvergenceError",
    "IntegrationStallError",
    "NumericalError",
    "UsageError",
    "RandomSource",
    "as_source",
    "__version__",
]
