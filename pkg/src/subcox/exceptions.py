"""Exception types shared across the package."""


class DataError(ValueError):
    """Invalid or inconsistent input data (bad CSV, empty stratum, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure produced a non-finite or unusable result."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its iteration budget."""


class ConcordanceUndefinedError(NumericalError):
    """No usable pairs exist, so the concordance index is undefined."""


class UsageError(ValueError):
    """Invalid command-line flags or configuration values."""
