"""Optimal allocation mechanisms when agents learn from each other's signals."""

__version__ = "0.1.0"

from .distributions import (
    BeliefDistribution,
    BetaSymmetric,
    Tabulated,
    TruncatedNormal,
    Uniform,
    from_config,
    validate,
)
from .estimator import OptimalMechanismDesigner
from .first_best import EnvelopeBounds, asymptotic_envelope, efficient_envelope, efficient_value
from .mechanisms import (
    MonotoneThresholdMechanism,
    ThresholdPiece,
    designer_value,
    solve_line,
    solve_logconcave,
    two_threshold,
)
from .optimizer import IndirectUtility, ObjectiveWeights, objective_weights, solve_reduced

__all__ = [
    "BeliefDistribution",
    "BetaSymmetric",
    "EnvelopeBounds",
    "IndirectUtility",
    "MonotoneThresholdMechanism",
    "ObjectiveWeights",
    "OptimalMechanismDesigner",
    "Tabulated",
    "ThresholdPiece",
    "TruncatedNormal",
    "Uniform",
    "asymptotic_envelope",
    "designer_value",
    "efficient_envelope",
    "efficient_value",
    "from_config",
    "objective_weights",
    "solve_line",
    "solve_logconcave",
    "solve_reduced",
    "two_threshold",
    "validate",
]
