"""Exception hierarchy shared by every stage of the pipeline."""


class DeltaMapsError(Exception):
    """Base class for all package errors."""


class ConfigError(DeltaMapsError, ValueError):
    """Invalid parameters or configuration."""


class DataError(DeltaMapsError, ValueError):
    """Malformed or inconsistent input data."""


class EmptyGridError(DataError):
    """Every cell of the grid is masked."""


class DegenerateSeriesError(DataError):
    """A time series has (numerically) zero variance."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NoSignalError(DeltaMapsError):
    """No statistically significant structure was found (no delta, no seeds)."""
