"""Exception types shared across the package.

Each class carries the process exit status the CLI maps it to.
"""


class EjmError(Exception):
    exit_code = 1


class DomainError(EjmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 1


class UsageError(EjmError, ValueError):
    exit_code = 1


class ValidityError(EjmError, ValueError):
    """A distribution, correlator set or model breaks one of its invariants."""

    exit_code = 2


class SignallingError(ValidityError):
    pass


class NumericalError(EjmError, ArithmeticError):
    exit_code = 2


class VerificationFailure(EjmError):
    exit_code = 3
