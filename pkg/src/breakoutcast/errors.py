"""Exception types shared across the package."""


class BreakoutcastError(Exception):
    """Base class for package errors."""


class ParseError(BreakoutcastError):
    """A record stream could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(BreakoutcastError):
    """Parsed but semantically invalid input (negative count, bad channel, ...)."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(BreakoutcastError):
    """Invalid run configuration or split layout."""


class DegenerateSeriesError(BreakoutcastError):
    """Series is constant, so a unit-root test is meaningless."""


class RankDeficiencyError(BreakoutcastError):
    """Least-squares regressor matrix is rank deficient."""


class EstimationError(BreakoutcastError):
    """Every candidate model failed to fit for an entity."""


class ContractError(BreakoutcastError):
    """A model API contract was violated (layout mismatch, missing normalization)."""
