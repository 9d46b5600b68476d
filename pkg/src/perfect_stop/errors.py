"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation (e.g. t > T)."""


class ParameterError(ValueError):
    """A model, forecast or rule was constructed with invalid parameters."""


class SolverError(RuntimeError):
    """A root finder could not bracket or converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class AccuracyError(ArithmeticError):
    """A series did not converge within its term budget."""


class SizeError(ValueError):
    """An exhaustive enumeration would exceed its configured cap."""


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
