"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``InputError`` and ``ConfigError`` give 2,
``NumericalError`` gives 3.
"""


class RKHSError(Exception):
    """Base class for every error raised by rkhskit."""


class InputError(RKHSError, ValueError):
    """Malformed or incompatible data (shapes, dimensions, file contents)."""


class ConfigError(RKHSError, ValueError):
    """Invalid parameters: non-positive lambda, unknown kernel kind, etc."""


class NumericalError(RKHSError, ArithmeticError):
    """A linear-algebra routine failed even after regularization."""
