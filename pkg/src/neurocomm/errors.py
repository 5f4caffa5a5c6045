"""Exception types shared across the package."""


class SpecificationError(ValueError):
    """A configuration value violates its documented bounds."""


class ParseError(ValueError):
    """A data file is malformed; carries the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingBridgeError(ValueError):
    """A routed demand crosses a group pair that has no bridge assigned."""
