"""Exception types shared across the package."""


class SeparationError(Exception):
    """Base class for all errors raised by unfoldsep."""


class ConfigError(SeparationError, ValueError):
    """An invalid configuration value (window, gamma, K, ...)."""


class InputError(SeparationError, ValueError):
    """Malformed input data: shapes, lengths, empty signals."""


class GraphError(SeparationError, ValueError):
    """Misuse of the differentiation tape."""


class NumericalError(SeparationError, ArithmeticError):
    """A computation produced a non-finite value."""


class TrainingError(SeparationError, RuntimeError):
    """Training diverged or could not proceed."""
