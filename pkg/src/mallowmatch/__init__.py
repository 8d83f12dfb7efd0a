"""Two-sided matching markets with Mallows-correlated preferences."""
from .mallows import (
    DisplacementStats,
    MallowsParams,
    Permutation,
    displacement_stats,
    inversions,
    normalization_constant,
    pmf,
    sample,
    tail_bound,
)
from .market import MarketConfig, MarketInstance, PreferenceProfile, Side, central_rank, generate, rank_of
from .matching import (
    Matching,
    StableSet,
    blocking_pairs,
    brute_force_stable,
    deferred_acceptance,
    enumerate_stable,
    is_stable,
)
from .metrics import average_ranks, holzman_check, maximal_displacement, pair_gaps, welfare_ratios

__version__ = "0.1.0"
