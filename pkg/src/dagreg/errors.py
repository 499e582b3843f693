"""Exception types shared across the package."""


class DagregError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DagregError):
    """Bad input: inconsistent dimensions, malformed files, invalid config."""


class NumericError(DagregError):
    """Numeric failure while evaluating a model quantity."""


class NotPositiveDefinite(NumericError):
    """A factorization pivot fell at or below the configured epsilon."""


class SingularBlock(NumericError):
    """A parent-indexed block is numerically singular."""


class InvalidShape(NumericError):
    """A distribution shape parameter is outside its admissible range."""


class CapExceeded(ValidationError):
    """A parent set or model exceeds its configured size cap."""


class RankDeficient(NumericError):
    """The active-column Gram matrix is numerically singular."""


class DegenerateVariance(NumericError):
    """A residual variance collapsed to (numerical) zero."""


class EmptyChain(ValidationError):
    """A chain with zero stored draws was given to a post-processing step."""


class CountTooLarge(ValidationError):
    """More support cells requested than the grid contains."""


class ZeroReference(NumericError):
    """The reference matrix of a relative error has zero norm."""


class TooShort(ValidationError):
    """The series is too short for the requested diagnostic."""


class UndefinedEstimate(NumericError):
    """An estimator's defining average has an empty index set."""
