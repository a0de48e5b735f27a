"""Exception hierarchy.

Each class maps onto one CLI exit code, see :mod:`hdmosum.cli`.
"""


class HDMosumError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HDMosumError, ValueError):
    """Invalid parameter or inconsistent configuration."""


class DataValidationError(HDMosumError, ValueError):
    """Input data violates a structural invariant (shape, finiteness, ids)."""


class ParseError(DataValidationError):
    """Malformed input file."""


class NumericalError(HDMosumError, ArithmeticError):
    """A numerical routine failed (factorization, root finding)."""
