"""Exception types shared across the package."""


class CrossclustError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CrossclustError, ValueError):
    """Array arguments have inconsistent or unexpected shapes."""


class DegenerateRowError(CrossclustError, ValueError):
    """A row that must have nonzero norm is (numerically) zero."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"row {row} has zero norm and cannot be normalized")


class ContractViolationError(CrossclustError, ValueError):
    """An input violates a documented precondition of the callee."""


class ConfigError(CrossclustError, ValueError):
    """A configuration value is missing, unknown, or out of range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class CsvFormatError(CrossclustError, ValueError):
    """A CSV file cannot be parsed; carries 1-based row/column positions."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + where)


class NonFiniteError(CrossclustError, FloatingPointError):
    """A computation produced or received NaN/Inf where finite values are required."""
