"""Max-Min allocation of indivisible items.

The main entry points are :func:`solve` for canonical instances (layered LP
plus randomized rounding), :func:`solve_balance` for instances where every
item is wanted by at most two agents, and the exact oracles used to check
them.
"""
from .balancing import WeightedGraph, orient, solve_balance, to_graph, weo_violations
from .canonical import CanonicalInstance, LightSpec, canonicalize, lift_solution
from .instance import Allocation, Instance, InstanceError, normalize, value
from .layered_lp import Infeasible, build_layered_graph, build_lp, solve_lp
from .oracles import brute_force_opt, solve_vector_enumeration
from .pipeline import solve_layered_instance
from .rounding import bs_decompose, solve, verify_canonical_allocation

__all__ = [
    "Allocation", "CanonicalInstance", "Infeasible", "Instance", "InstanceError", "LightSpec",
    "WeightedGraph", "brute_force_opt", "bs_decompose", "build_layered_graph", "build_lp",
    "canonicalize", "lift_solution", "normalize", "orient", "solve", "solve_balance",
    "solve_layered_instance", "solve_lp", "solve_vector_enumeration", "to_graph", "value",
    "verify_canonical_allocation", "weo_violations",
]
