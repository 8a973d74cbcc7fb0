class DriverprintError(Exception):
    """Base error; ``exit_code`` is what the management commands exit with."""
    exit_code = 1


class ConfigError(DriverprintError):
    exit_code = 1


class DataError(DriverprintError):
    exit_code = 2


class ShapeError(DataError, ValueError):
    exit_code = 2


class NumericError(DriverprintError, ArithmeticError):
    exit_code = 3
