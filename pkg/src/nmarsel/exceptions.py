"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3 and numerical failures with 4.
"""


class NmarselError(Exception):
    exit_code = 1


class ConfigError(NmarselError, ValueError):
    exit_code = 2


class DataError(NmarselError, ValueError):
    exit_code = 3


class DomainError(DataError):
    """An argument lies outside the domain of a function."""


class PreconditionError(DataError):
    """Inputs violate a documented precondition."""


class CapabilityError(NmarselError, NotImplementedError):
    """Requested configuration is valid in principle but not supported."""

    exit_code = 2


class NumericalError(NmarselError, ArithmeticError):
    exit_code = 4


class InsufficientDataError(NumericalError):
    """Not enough observations in a smoothing window or subsample."""
