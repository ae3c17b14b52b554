"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: :class:`ConfigError` and
:class:`DomainError` exit with 1, :class:`NumericalFailure` and I/O errors
with 2.
"""


class TopoquenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TopoquenchError, ValueError):
    """Invalid user input (bad key, bad value, unsatisfied precondition)."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class SizeLimitError(ConfigError):
    """Request exceeds an explicit size bound (exhaustive checks, dense ED)."""


class LatticeMismatchError(TopoquenchError, ValueError):
    """Operands live on different lattices."""


class NumericalFailure(TopoquenchError, RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""
