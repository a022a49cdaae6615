"""Exception types shared across the toolkit."""


class IncomeFitError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(IncomeFitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OverflowRangeError(IncomeFitError, OverflowError):
    """A result would overflow the 64-bit float range (e.g. gamma_fn above ~171.62)."""


class ConvergenceError(IncomeFitError):
    """An iterative kernel exhausted its iteration budget.

    Carries the iteration count at which the computation gave up.
    """

    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class PreconditionError(IncomeFitError, ValueError):
    """A documented call precondition was violated."""


class ParseError(IncomeFitError):
    """Malformed tabular input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(IncomeFitError):
    """Histograms that must share bin edges do not."""


class ConsistencyError(IncomeFitError):
    """Data that must be mutually consistent is not (e.g. a part exceeds the whole)."""


class FitFailureError(IncomeFitError):
    """Every multistart attempt of a fit produced non-finite residuals."""
