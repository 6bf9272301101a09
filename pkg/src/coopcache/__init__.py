"""Cooperative pre-caching for social groups with probabilistic encounters.

Users are indexed from 0 throughout the library and in every file format.
"""

from coopcache.errors import (
    CapacityError,
    CoopCacheError,
    DimensionError,
    InsufficientGroupsError,
    LpNumericalError,
    TraceError,
)
from coopcache.probmodel import (
    Configuration,
    ProbabilityMatrix,
    SelectionVector,
    config_probability,
    exact_neighborhood_probability,
    expected_degree,
)
from coopcache.lp import LpProblem, LpSolution, solve
from coopcache.planner import (
    CacheVector,
    EvaluatedCost,
    build_full_lp,
    build_reduced_lp,
    build_symmetric_lp,
    evaluate_cost,
    solve_symmetric_closed,
)
from coopcache.heuristics import (
    GapReport,
    HeuristicResult,
    algcov,
    gap_asymmetric,
    gap_symmetric,
    iad,
    lower_bound_flb,
    psc,
)
from coopcache.indirect import LayeredModel, effective_direct_model, multi_step, single_step
from coopcache.setcover import setcover_lp_value, weighted_setcover_bound

__version__ = "0.1.0"
