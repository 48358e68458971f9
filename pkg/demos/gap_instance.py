"""The layered LP on the gap instance.

For target M the LP is fractionally feasible, yet no integral allocation
reaches more than 1. The iterative driver notices in its second
iteration, where the LP becomes infeasible and a Farkas ray certifies it.
Run with ``python3 demos/gap_instance.py``.
"""
from artifact.generators import gap_after_first_iteration, gen_gap_instance
from artifact.layered_lp import build_layered_graph, build_lp, solve_lp
from artifact.oracles import branch_and_bound_opt
from artifact.rounding import IterationState, solve

for M in (2, 3):
    ci, pa = gen_gap_instance(M)
    model = build_lp(build_layered_graph(ci, pa, 2))
    sol = solve_lp(model)
    opt, _ = branch_and_bound_opt(ci.to_instance())
    print(f"M={M}: {len(ci.agents)} agents, {ci.n_items} items, {len(pa.T)} terminals")
    print(f"  LP with h=2: {type(sol).__name__}, {len(model.rows)} rows; integral optimum {opt}")

    # resume where the first iteration leaves the driver
    cj, done, P, Q = gap_after_first_iteration(M)
    T = frozenset(a for a in cj.heavy if a not in P)
    res = solve(cj, h=2, alpha=2, start=IterationState(2, done, T, P, Q), prescaled=True)
    rec = res.trace[-1]
    print(f"  iteration {rec['iteration']}: LP {rec['lp']}, ray violation {rec['violation']:.3g}, "
          f"verified {rec['certified']}")
