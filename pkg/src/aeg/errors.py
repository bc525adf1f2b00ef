"""Exception types shared across the package."""


class AegError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(AegError):
    """Shapes of two operands are incompatible."""

    def __init__(self, message, left=None, right=None):
        if left is not None or right is not None:
            message = f"{message} (got {left} vs {right})"
        super().__init__(message)


class EmptyInputError(AegError):
    """An operation received an empty sequence where at least one element is required."""


class NotBackpropagatedError(AegError):
    """An optimizer step was requested for a parameter with no gradient."""


class BudgetExhaustedError(AegError):
    """The oracle query budget has been spent."""


class CorpusFormatError(AegError):
    """Too many malformed lines in an input corpus file."""


class RewardRangeError(AegError):
    """A reward component fell outside [0, 1]."""


class CheckpointError(AegError):
    """A checkpoint file is missing, truncated, or has the wrong magic header."""


class ConfigError(AegError):
    """Invalid configuration value or file."""
