"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for usage/configuration problems, 3 for bad data, 4 for numerical failure.
"""


class BsblcsError(Exception):
    exit_code = 1


class ConfigError(BsblcsError, ValueError):
    exit_code = 2


class DataError(BsblcsError, ValueError):
    exit_code = 3


class NumericalError(BsblcsError, ArithmeticError):
    exit_code = 4


# sensing
class InvalidDimensions(ConfigError):
    pass


class ExhaustedReseed(ConfigError):
    pass


class LengthMismatch(DataError):
    pass


# dictionary / solver
class InvalidSize(ConfigError):
    pass


class InvalidLevels(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class InvalidStep(ConfigError):
    pass


class CholeskyFailure(NumericalError):
    pass


# baselines / metrics
class InvalidK(ConfigError):
    pass


class ZeroReference(DataError):
    pass


class WindowTooLarge(DataError):
    pass


class ZeroRange(DataError):
    pass


class EmptyLabel(DataError):
    pass


# telemetry
class FieldOverflow(DataError):
    pass


class BadMagic(DataError):
    pass


class BadVersion(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class RaggedRows(DataError):
    pass


class NonNumericCell(DataError):
    pass


class InvalidKind(ConfigError):
    pass
