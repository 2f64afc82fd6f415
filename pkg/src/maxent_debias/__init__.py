"""Fair maximum-entropy distributions over discrete tabular domains."""

from .domain import AttributeBlock, BlockKind, Dataset, DomainSchema, Role, empirical_marginal
from .metrics import (
    FairnessReport,
    covariance_difference_norm,
    fairness_bound,
    fairness_report,
    kl_divergence_smoothed,
    representation_rate,
    statistical_rate,
)
from .oracle import brute_force_dual, dual_gradient, dual_hessian, dual_value, evaluate
from .prior import MixedPrior, ReweightedDistribution, empirical_weights, mix_prior, reweight
from .sampler import (
    PartialAssignment,
    conditional_block_distribution,
    restricted_log_partition,
    sample_dataset,
    sample_point,
)
from .solver import MarginalKind, MaxEntModel, SolverConfig, SolverMode, bounding_radius, solve, target_marginal

__version__ = "0.1.0"

__all__ = [
    "AttributeBlock",
    "BlockKind",
    "Dataset",
    "DomainSchema",
    "Role",
    "empirical_marginal",
    "FairnessReport",
    "covariance_difference_norm",
    "fairness_bound",
    "fairness_report",
    "kl_divergence_smoothed",
    "representation_rate",
    "statistical_rate",
    "brute_force_dual",
    "dual_gradient",
    "dual_hessian",
    "dual_value",
    "evaluate",
    "MixedPrior",
    "ReweightedDistribution",
    "empirical_weights",
    "mix_prior",
    "reweight",
    "PartialAssignment",
    "conditional_block_distribution",
    "restricted_log_partition",
    "sample_dataset",
    "sample_point",
    "MarginalKind",
    "MaxEntModel",
    "SolverConfig",
    "SolverMode",
    "bounding_radius",
    "solve",
    "target_marginal",
]
