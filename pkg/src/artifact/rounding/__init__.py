"""Rounding of the layered LP into an allocation for canonical instances."""
from .bs import BSError, Tree, TreeDecomposition, bs_decompose, check_rows, tree_assignment
from .driver import (
    AlmostFeasiblePaths,
    IterationState,
    ProgressError,
    SolveResult,
    almost_feasible,
    augment_terminals,
    check_almost_feasible,
    cleanup_bad_agents,
    default_alpha,
    solve,
    verify_canonical_allocation,
)
from .rescue import RescueError, RescueResult, floor_div, merge_Q, multiplicity, rescue_flow, route_quotas
from .sampling import (
    RetryExhausted,
    RoundingError,
    TerminalRouting,
    congestion_bound,
    randomized_round,
    route_to_terminals,
)
from .spider import RerouteResult, SpiderError, SpiderPrefixes, check_spider, reroute, spider_prefixes

__all__ = [
    "BSError", "Tree", "TreeDecomposition", "bs_decompose", "check_rows", "tree_assignment",
    "AlmostFeasiblePaths", "IterationState", "ProgressError", "SolveResult", "almost_feasible",
    "augment_terminals", "check_almost_feasible", "cleanup_bad_agents", "default_alpha", "solve",
    "verify_canonical_allocation",
    "RescueError", "RescueResult", "floor_div", "merge_Q", "multiplicity", "rescue_flow", "route_quotas",
    "RetryExhausted", "RoundingError", "TerminalRouting", "congestion_bound", "randomized_round",
    "route_to_terminals",
    "RerouteResult", "SpiderError", "SpiderPrefixes", "check_spider", "reroute", "spider_prefixes",
]
