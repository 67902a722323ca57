"""Exception types raised across the package.

Everything derives from PrivsweepError so callers (and the CLI) can catch
one base class and turn it into a diagnostic plus a nonzero exit code.
"""


class PrivsweepError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PrivsweepError, ValueError):
    """A scalar argument is out of its documented range."""


class ShapeError(PrivsweepError, ValueError):
    """Array arguments do not conform (wrong rank or mismatched dims)."""


class IngestionError(PrivsweepError, ValueError):
    """A data file could not be parsed; names the offending row/column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class InfeasibleParametersError(ParameterError):
    """A noise formula has no valid solution for the given (n, delta)."""

    def __init__(self, message: str, n: int, delta: float):
        super().__init__(f"{message} (n={n}, delta={delta})")
        self.n = n
        self.delta = delta


class TrainingError(PrivsweepError, RuntimeError):
    """Training diverged; reports the optimizer step where it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class NumericalError(PrivsweepError, RuntimeError):
    """A loss or gradient evaluation produced a non-finite value."""

    def __init__(self, message: str, batch_index: int | None = None):
        if batch_index is not None:
            message = f"{message} (batch index {batch_index})"
        super().__init__(message)
        self.batch_index = batch_index


class ConfigurationError(PrivsweepError, ValueError):
    """An experiment or attack configuration is invalid or inconsistent."""


class EmptyReportError(PrivsweepError, ValueError):
    """Raised when a report is requested but no successful rows exist."""


class UndefinedMetricError(PrivsweepError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero denominator)."""


class FormatError(PrivsweepError, ValueError):
    """A persisted file does not match the expected versioned format."""
