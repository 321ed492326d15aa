"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when an argument is outside the domain an operation accepts."""


class EvaluationError(ArithmeticError):
    """A non-finite value appeared while evaluating a recorded operation.

    Carries the name of the elementary operation and the flat index of the
    first offending entry so callers can map it back to a batch row.
    """

    def __init__(self, op, index=None, detail="", shape=None):
        self.op = op
        self.index = index
        self.shape = shape
        msg = f"non-finite result in op '{op}'"
        if index is not None:
            msg += f" at flat index {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericalError(ArithmeticError):
    """A computed quantity (gradient, response, update) is not finite."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
