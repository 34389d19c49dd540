"""Exception types shared across the simulator."""


class GenerationFailed(Exception):
    """World or spawn placement could not find a valid position."""


class ShapeError(ValueError):
    """Array argument has the wrong shape or length."""


class NumericalDivergence(ArithmeticError):
    """A training loss went non-finite; the offending update was rolled back."""


class ParseError(ValueError):
    """Malformed CSV, JSON, or config input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Invalid run-configuration section, key, or value."""


class ProtocolError(Exception):
    """Malformed or out-of-contract wire message."""


class FrameTooLarge(ProtocolError):
    """Frame length prefix exceeds the 16 MiB cap."""


class EmptyInput(ValueError):
    """An operation that needs at least one record received none."""
