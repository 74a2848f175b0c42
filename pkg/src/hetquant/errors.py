"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` for malformed inputs and
``NumericalError`` for failures inside an otherwise valid computation. The CLI
maps them to exit codes 2 and 1 respectively.
"""

from __future__ import annotations


class HetQuantError(Exception):
    """Base class for all package errors."""


class ValidationError(HetQuantError, ValueError):
    """Input does not satisfy a documented precondition."""


class NumericalError(HetQuantError, ArithmeticError):
    """A computation failed on valid input (rank loss, degenerate resample)."""


# -- panel ingestion ---------------------------------------------------------


class MissingColumn(ValidationError):
    def __init__(self, column: str, available: list[str] | None = None):
        self.column = column
        msg = f"missing column {column!r}"
        if available is not None:
            msg += f" (available: {', '.join(available)})"
        super().__init__(msg)


class UnbalancedPanel(ValidationError):
    def __init__(self, units: list[str], expected_periods: int):
        self.units = list(units)
        self.expected_periods = expected_periods
        shown = ", ".join(self.units[:10])
        more = "" if len(self.units) <= 10 else f" and {len(self.units) - 10} more"
        super().__init__(
            f"unbalanced panel: units {shown}{more} do not cover all "
            f"{expected_periods} periods"
        )


class DuplicateCell(ValidationError):
    def __init__(self, unit: str, time: str, row: int):
        self.unit, self.time, self.row = unit, time, row
        super().__init__(f"duplicate cell (unit={unit}, time={time}) at row {row}")


class NonFiniteValue(ValidationError):
    def __init__(self, column: str, row: int, raw: str):
        self.column, self.row, self.raw = column, row, raw
        super().__init__(f"non-finite or unparseable value {raw!r} in column {column!r} at row {row}")


class IoError(HetQuantError, OSError):
    """Reading or writing a file failed."""


# -- estimation --------------------------------------------------------------


class InsufficientPeriods(ValidationError):
    pass


class RankDeficient(NumericalError):
    pass


class EmptyInput(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class UnsortedTaus(ValidationError):
    pass


class EmptyReplicates(ValidationError):
    pass


class DegenerateResample(NumericalError):
    def __init__(self, unit: int, replicate: int, attempts: int):
        self.unit, self.replicate, self.attempts = unit, replicate, attempts
        super().__init__(
            f"unit {unit}: every time resample in replicate {replicate} was "
            f"rank deficient ({attempts} draws)"
        )


# -- simulation --------------------------------------------------------------


class InvalidSpec(ValidationError):
    pass


class UnsupportedSpec(ValidationError):
    pass
