"""Exception types shared across the package."""


class PolysmoothError(Exception):
    """Base class for package errors."""


class LPError(PolysmoothError):
    """A linear program failed (infeasible, unbounded, or solver failure)."""


class UnboundedPolytopeError(PolysmoothError):
    """The feasible region is unbounded; downstream meshing requires compactness."""


class EmptyInteriorError(PolysmoothError):
    """The feasible region has no interior point with positive margin."""


class NoValidLambdaError(PolysmoothError):
    """The active-combination constant iteration exceeded its bound."""


class CertificateError(PolysmoothError):
    """A randomized certificate test found a violating configuration."""


class VanishingGradientError(PolysmoothError):
    """A gradient norm fell below tolerance where a unit normal was required."""


class WedgeDegeneracyError(PolysmoothError):
    """Interpolation angle undefined because the wedge denominator vanished."""


class DomainError(PolysmoothError):
    """A point lies outside the domain of the requested recursive map."""
