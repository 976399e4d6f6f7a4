"""Exception hierarchy shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DegenerateInputError(ValidationError):
    """Input is well formed but geometrically degenerate (e.g. all points coincide)."""


class ConfigError(ValueError):
    """Invalid run or training configuration."""


class ParseError(ValueError):
    """Malformed file contents.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class InvariantViolation(RuntimeError):
    """A checked mathematical invariant did not hold."""
