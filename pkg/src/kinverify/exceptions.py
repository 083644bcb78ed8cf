class KinverifyError(Exception):
    """Base class for errors raised by this package."""


class InputError(KinverifyError, ValueError):
    """Malformed or inconsistent input data (files, sample lists, flags)."""


class ConfigError(InputError):
    """Invalid configuration values."""


class ShapeError(KinverifyError, ValueError):
    """Array dimensions do not agree."""


class ContractError(KinverifyError, ValueError):
    """A call violated an operation's preconditions."""


class NumericError(KinverifyError, ArithmeticError):
    """A non-finite value appeared where only finite values are allowed."""
