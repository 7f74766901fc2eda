"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid problem, optimizer or experiment configuration."""


class DataError(ValueError):
    """Logged data that cannot be used by an estimator (e.g. zero propensity)."""


class NumericError(FloatingPointError):
    """Non-finite logits, objectives or gradients."""


class MethodError(ValueError):
    """A hypervolume method was called outside its domain."""


class ParseError(ValueError):
    """Malformed dataset or policy file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """A parsed file is well-formed but its contents are inconsistent."""
