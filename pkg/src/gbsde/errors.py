"""Exception hierarchy shared across the solver modules."""


class Error(Exception):
    """Base class for all errors raised by this package."""


class ExprSyntaxError(Error):
    """Source text failed to parse.

    Carries the byte offset of the failure and a short description of
    what would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: str = ""):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class ExprEvalError(Error):
    """An expression evaluated to an undefined value (log/sqrt domain,
    division by zero, unbound variable, fractional power of a negative)."""


class SchemaError(Error):
    """Problem file violates the documented JSON schema."""


class StabilityError(Error):
    """Grid or lattice construction violates an explicit-scheme stability
    or probability-validity constraint."""


class DivergenceError(Error):
    """A solve produced non-finite values; ``layer`` is the first failing
    backward time layer when known."""

    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        super().__init__(message)


class ScenarioError(Error):
    """A volatility scenario leaves the declared band or does not cover
    the horizon."""


class UsageError(Error):
    """Malformed command-line configuration."""
