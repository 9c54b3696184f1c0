"""Shared exception types."""


class CapacityError(RuntimeError):
    """An exact computation would exceed its enumeration guard."""


class InputError(ValueError):
    """Inputs violate a precondition (box mismatch, incompatible collection, ...)."""


class GridParseError(ValueError):
    """A height-grid file could not be parsed; carries row/column info."""

    def __init__(self, message: str, row: int, col: int | None = None):
        self.row = row
        self.col = col
        where = f"row {row}" if col is None else f"row {row}, column {col}"
        super().__init__(f"{message} ({where})")
