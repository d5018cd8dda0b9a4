"""Exception hierarchy.

Every error raised by the package derives from :class:`DCPLError` and carries
an ``exit_code`` used by the command-line front end (1 config, 2 data,
3 numeric, 4 internal).
"""


class DCPLError(Exception):
    exit_code = 4


class ArgumentError(DCPLError, ValueError):
    """A caller passed an argument outside the operation's domain."""


class ContractError(DCPLError):
    """A callable handed to the package broke its documented contract."""


class ConfigError(DCPLError, ValueError):
    exit_code = 1


class DataError(DCPLError, ValueError):
    """Base class for problems with input data (exit code 2)."""

    exit_code = 2


class DegenerateInputError(DataError):
    pass


class DegenerateClassError(DegenerateInputError):
    def __init__(self, cls: int, message: str):
        super().__init__(message)
        self.cls = cls


class DataFormatError(DataError):
    """The on-disk container could not be parsed or failed validation."""

    def __init__(self, message: str, row: int | None = None, field: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.field = field


class MissingFileError(DataFormatError, FileNotFoundError):
    pass


class BadMagicError(DataFormatError):
    pass


class DimensionMismatchError(DataFormatError):
    pass


class LabelRangeError(DataFormatError):
    pass


class NonFiniteError(DataFormatError):
    pass


class NumericError(DCPLError, FloatingPointError):
    """Training produced a non-finite loss."""

    exit_code = 3
