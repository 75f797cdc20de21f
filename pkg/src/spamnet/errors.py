"""Exception types; each maps onto a CLI exit code."""


class SpamnetError(Exception):
    exit_code = 1


class ConfigError(SpamnetError, ValueError):
    exit_code = 2


class DataError(SpamnetError, ValueError):
    exit_code = 3


class DomainError(SpamnetError, ValueError):
    """Argument outside the domain where a quantity is finite or defined."""

    exit_code = 4


class NumericalError(SpamnetError, ArithmeticError):
    exit_code = 4
