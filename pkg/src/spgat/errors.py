"""Exception hierarchy. Each class carries the CLI exit status it maps to."""


class SpgatError(Exception):
    exit_code = 1


class ShapeError(SpgatError, ValueError):
    exit_code = 4


class NumericError(SpgatError, ArithmeticError):
    exit_code = 5


class TapeError(SpgatError, RuntimeError):
    pass


class LabelError(SpgatError, ValueError):
    exit_code = 4


class DegenerateBatchError(ShapeError):
    pass


class FormatError(SpgatError, ValueError):
    exit_code = 4


class SplitError(SpgatError, ValueError):
    exit_code = 4


class ConfigError(SpgatError, ValueError):
    exit_code = 3


class EvalError(SpgatError, ValueError):
    exit_code = 4
