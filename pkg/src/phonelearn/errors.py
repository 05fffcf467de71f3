"""Exception types shared across the package.

Every error raised on a user-facing path derives from PhoneLearnError so
that callers (and the command line driver) can catch one base class.
"""

from __future__ import annotations


class PhoneLearnError(Exception):
    """Base class for all package-specific errors."""


class ParseError(PhoneLearnError):
    """A text input (alignment table, feature table, ...) is malformed.

    Carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Rows of a streamed table violate a required ordering invariant."""


class InventoryError(PhoneLearnError):
    """A phone label is not part of the active phone inventory."""


class DataError(PhoneLearnError):
    """Input data are structurally valid but unusable for the request."""


class NumericOverflowError(PhoneLearnError):
    """Learning diverged to non-finite values.

    ``trial_index`` identifies the first training event at which a
    non-finite activation or error term appeared.
    """

    def __init__(self, message: str, trial_index: int | None = None):
        self.trial_index = trial_index
        if trial_index is not None:
            message = f"{message} (trial_index={trial_index})"
        super().__init__(message)


class UndefinedResultError(PhoneLearnError):
    """A statistic is mathematically undefined for the given input."""
