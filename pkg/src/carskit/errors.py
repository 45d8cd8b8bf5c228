"""Exception hierarchy; each class maps to a CLI exit code."""


class CarsKitError(Exception):
    exit_code = 1


class ConfigError(CarsKitError, ValueError):
    exit_code = 2


class DataError(CarsKitError, ValueError):
    exit_code = 3


class DegenerateRangeError(DataError):
    """Raised when a spectrum has no dynamic range to normalize."""


class NumericError(CarsKitError, ArithmeticError):
    exit_code = 4
