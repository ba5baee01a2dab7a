"""Exception types shared across the package."""


class FlaError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FlaError):
    """Malformed input file content; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(FlaError):
    """Invalid argument, configuration, or data (range/shape/consistency)."""


class CapacityError(FlaError):
    """A configured size cap would be exceeded."""


class QueryError(FlaError):
    """Malformed query predicate; carries the 0-based character position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
