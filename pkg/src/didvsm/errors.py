"""Exception hierarchy shared by every stage.

Each family carries the process exit code the command line driver uses.
"""


class DidError(Exception):
    exit_code = 1


class ConfigError(DidError, ValueError):
    exit_code = 2


class DataError(DidError, ValueError):
    exit_code = 3


class InputError(DataError):
    """Malformed or non-finite input values."""


class DimensionError(DataError):
    """Shapes or requested ranks are inconsistent."""


class InsufficientDataError(DataError):
    pass


class FormatError(DataError):
    """A file does not follow its binary or text format."""


class MissingStageInput(DataError):
    def __init__(self, name, path, producer):
        self.name = name
        self.path = path
        self.producer = producer
        super().__init__(
            f"missing stage input {name!r} at {path}; run `didvsm {producer}` first"
        )


class NumericalError(DidError, ArithmeticError):
    exit_code = 4


class NotPSDError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
