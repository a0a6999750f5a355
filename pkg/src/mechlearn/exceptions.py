"""Exception hierarchy shared across the package."""


class MechLearnError(Exception):
    """Base class for all package errors."""


class ConfigError(MechLearnError):
    """Malformed or inconsistent run configuration."""


class InvalidDistribution(MechLearnError):
    """Belief density fails normalization, mean or positivity checks."""


class OutOfSupport(MechLearnError, ValueError):
    """Belief evaluated outside the distribution support."""


class RangeTooSmall(MechLearnError):
    """Log-likelihood-ratio grid clips more mass than allowed."""


class LineInfeasible(MechLearnError):
    """Requested line is not implementable by a threshold rule."""


class NoBracket(MechLearnError):
    """Bisection could not bracket a root."""


class NotLogConcave(MechLearnError):
    """Closed-form construction requires a log-concave density."""


class NoRoot(MechLearnError):
    """Certificate function has no sign change on the search interval."""


class CertificateFailed(MechLearnError):
    """Optimality certificate inequality violated."""


class NonConvexUtility(MechLearnError):
    """Induced indirect utility breaks convexity or bound invariants."""


class StructureViolation(MechLearnError):
    """LP solution region expected to be linear is not."""


class NumericalFailure(MechLearnError):
    """LP solver or quadrature did not converge."""


class WrongMarketSize(MechLearnError):
    """Operation only defined for a specific number of agents."""


class UnsupportedNetwork(MechLearnError):
    """Observation network outside the supported size or shape."""


class EndpointMismatch(MechLearnError):
    """Cumulative functions disagree at the right endpoint."""
