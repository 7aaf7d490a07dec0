"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1 (handled by
click), :class:`DataError` and subclasses exit 2, anything else exits 3.
"""


class DataError(Exception):
    """Malformed, inconsistent, or unusable input data."""


class ParseError(DataError):
    """Text input that does not conform to an expected format.

    Carries an optional 1-based line number for diagnostics.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OracleGuardError(ValueError):
    """Raised when the exact-matching oracle refuses an oversized problem."""


class UndersizedClassError(DataError):
    """A class yielded fewer selectable patterns than the configured floor."""


class UnsatisfiableSpecError(DataError):
    """A synthetic-corpus spec that cannot be honored as written."""


class FetchError(DataError):
    """All accessions in a fetch request failed."""
