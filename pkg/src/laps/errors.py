"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
InternalError -> 3.
"""


class LapsError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(LapsError):
    """Bad command-line arguments or inconsistent configuration."""


class DataError(LapsError):
    """Malformed or invariant-violating input data."""


class InternalError(LapsError):
    """An internal invariant was violated; indicates a bug."""
