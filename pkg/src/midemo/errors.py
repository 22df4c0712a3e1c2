"""Exception hierarchy shared across the package."""


class MidemoError(Exception):
    """Base class for all package errors."""


class DataError(MidemoError):
    """Input data is missing, malformed or inconsistent."""


class DecodeError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateIdError(DataError):
    pass


class JoinError(DataError):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = sorted(missing)


class UnknownSongError(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown song"


class ConfigurationError(MidemoError, ValueError):
    pass


class RangeError(MidemoError, ValueError):
    pass


class DimensionError(MidemoError, ValueError):
    pass


class NumericError(MidemoError, ArithmeticError):
    """Non-finite values appeared during a computation."""


class SingularityError(NumericError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class DegenerateCorrelationError(NumericError):
    """Pearson correlation is undefined because one input has zero variance."""


class UnsupportedSchemeError(MidemoError):
    pass
