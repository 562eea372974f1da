"""Exception hierarchy.

Every error raised by the library derives from :class:`DDIQCError`. The CLI
maps :class:`PremiseError` subclasses to exit code 2 and :class:`ParseError`
to exit code 1.
"""


class DDIQCError(Exception):
    """Base class for library errors."""


class DimensionError(DDIQCError, ValueError):
    """Array shapes are inconsistent."""


class ArgumentError(DDIQCError, ValueError):
    """A scalar argument is outside its admissible range."""


class NumericError(DDIQCError, ValueError):
    """Input contains NaN or infinite entries."""


class PremiseError(DDIQCError):
    """A mathematical premise of the requested analysis is violated."""


class DomainError(PremiseError):
    """A model or parameter lies outside the operation's domain (e.g. unstable)."""


class ConditioningError(PremiseError):
    """A matrix required to be positive definite is not.

    Attributes
    ----------
    min_eigenvalue : float
        Smallest eigenvalue of the offending matrix.
    """

    def __init__(self, message, min_eigenvalue=float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DegenerateDataError(PremiseError):
    """The measured data cannot support the requested analysis."""


class UnboundedError(PremiseError):
    """A bisection bracket hit its cap without a sign change."""


class ConsistencyError(DDIQCError):
    """Two independent internal computations disagreed."""


class ParseError(DDIQCError):
    """An input file is malformed."""
