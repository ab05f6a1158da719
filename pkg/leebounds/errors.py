"""Exception hierarchy shared by every leebounds module."""

from typing import Optional


class LeeBoundsError(Exception):
    """Base class for all errors raised by leebounds."""

    exit_code = 1


class SchemaError(LeeBoundsError, ValueError):
    """Input file does not match the schema of the configured space."""

    exit_code = 2

    def __init__(self, message: str, row: Optional[int] = None):
        """
        Initialize schema error.

        Args:
            message: Description of the problem
            row: 1-based line number in the input file, if known
        """
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmbeddingError(LeeBoundsError, ValueError):
    """An object cannot be mapped into (or out of) its embedding space."""

    exit_code = 2


class ZeroComponent(EmbeddingError):
    pass


class NotInImage(EmbeddingError):
    pass


class AntipodalPoint(EmbeddingError):
    pass


class NotTangent(EmbeddingError):
    pass


class EmptySample(EmbeddingError):
    pass


class InvertedInterval(EmbeddingError):
    pass


class NotSymmetric(EmbeddingError):
    pass


class NotPositiveDefinite(EmbeddingError):
    pass


class InvalidObject(EmbeddingError):
    """Object violates the invariants of its type."""


class DimensionMismatch(LeeBoundsError, ValueError):
    exit_code = 2


class EstimationError(LeeBoundsError):
    """Numerical degeneracy during estimation or inference."""

    exit_code = 3


class EmptyArm(EstimationError):
    pass


class ZeroSelection(EstimationError):
    pass


class EmptyCell(EstimationError):
    pass


class GridMismatch(EstimationError):
    pass


class EmptyRegion(EstimationError):
    pass


class MissingAxisDirection(EstimationError):
    pass


class DegenerateResample(EstimationError):
    pass


class DegenerateVariance(EstimationError):
    pass


class ConfigError(LeeBoundsError, ValueError):
    """Invalid run configuration or argument."""

    exit_code = 4


class BadLambda(ConfigError):
    pass


class BadDimension(ConfigError):
    pass
