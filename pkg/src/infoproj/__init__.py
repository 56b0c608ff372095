"""Structured-sparse approximate inference by information projection of Gaussians."""
from .constraints import (
    GroupKnapsack,
    GroupStructure,
    PartitionMatroid,
    UniformMatroid,
    cost,
    expand_groups,
    is_independent,
)
from .gaussian import (
    GainState,
    GaussianDensity,
    GaussianObjective,
    condition_on_zero,
    kl_from_support,
    kl_gaussian,
    log_mass_at_zero,
    marginal_gain,
    objective_jtilde,
)
from .solvers import (
    SelectionResult,
    brute_force_max,
    greedy_matroid,
    greedy_multiview,
    greedy_partial_enum,
    reweighted_greedy,
)

__version__ = "0.1.0"
