"""Exception types shared across the package."""


class GcqrfError(Exception):
    """Base class for all package errors."""


class EmptyNode(GcqrfError):
    """An operation received a node with no observations."""


class InvalidTau(GcqrfError):
    """Quantile level outside the open interval (0, 1)."""


class BadInput(GcqrfError):
    """Malformed argument: shape mismatch, bad index, invalid value."""


class NoUncensored(GcqrfError):
    """A sample that must contain at least one uncensored observation has none."""


class NoOOBCoverage(GcqrfError):
    """No observation is out-of-bag for any tree; OOB loss undefined."""


class FoldDegenerate(GcqrfError):
    """A cross-fitting fold has no uncensored observations."""


class KnockoffFailure(GcqrfError):
    """Knockoff construction failed (singular covariance after ridge repair)."""


class CalibrationFailure(GcqrfError):
    """Censoring calibration did not reach the target rate within tolerance."""

    def __init__(self, message, best_bounds=None, best_rate=None):
        super().__init__(message)
        self.best_bounds = best_bounds
        self.best_rate = best_rate


class DegenerateBaseline(GcqrfError):
    """Relative metric requested against a zero baseline loss."""


class ParseError(GcqrfError):
    """A file could not be parsed; carries row/column context when known."""

    def __init__(self, message, row=None, column=None):
        if row is not None or column is not None:
            where = ", ".join(
                s for s in (
                    f"row {row}" if row is not None else None,
                    f"column {column!r}" if column is not None else None,
                ) if s
            )
            message = f"{message} ({where})"
        super().__init__(message)
        self.row = row
        self.column = column


class UnsupportedVersion(GcqrfError):
    """A persisted document has an unknown format version."""
