"""Exception types raised across the package.

Every class also derives from the closest built-in so callers can catch
either the specific type or the familiar one (``ValueError``, ``IndexError``...).
"""


class TripleGanError(Exception):
    """Base class for all errors raised by triplegan."""


class DimensionError(TripleGanError, ValueError):
    """Operand shapes do not agree."""


class LabelIndexError(TripleGanError, IndexError):
    """A class id lies outside [0, K)."""


class NumericError(TripleGanError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ContractError(TripleGanError, RuntimeError):
    """A caller broke an operation's precondition (e.g. non-scalar loss)."""


class DataError(TripleGanError, ValueError):
    """Dataset or split request cannot be satisfied."""


class ConfigError(TripleGanError, ValueError):
    """Configuration failed validation."""


class ConfigParseError(ConfigError):
    """Configuration text is not valid INI."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class CheckpointError(TripleGanError, ValueError):
    """Checkpoint bytes are malformed or do not match the model."""
