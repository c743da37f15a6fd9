"""Solvers for terminal-value and obstacle problems under a volatility
band: monotone finite differences, trinomial-lattice backward recursion,
and scenario Monte Carlo, cross-validated against each other."""

from . import backend, coeffexpr, gcalc, gsim, harness, latticebsde, pdesolve
from .errors import (
    DivergenceError,
    Error,
    ExprEvalError,
    ExprSyntaxError,
    ScenarioError,
    SchemaError,
    StabilityError,
)

__version__ = "0.1.0"

__all__ = [
    "backend",
    "coeffexpr",
    "gcalc",
    "gsim",
    "harness",
    "latticebsde",
    "pdesolve",
    "Error",
    "ExprSyntaxError",
    "ExprEvalError",
    "SchemaError",
    "StabilityError",
    "DivergenceError",
    "ScenarioError",
    "__version__",
]
