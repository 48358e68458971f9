"""Graph balancing on small 2-restricted instances.

Every item is wanted by one or two agents, so an instance is a multigraph:
agents are vertices and items are edges (a self-loop when one agent wants
the item). Run with ``python3 demos/graph_balancing.py``.
"""
from fractions import Fraction

from artifact.balancing import (
    brute_force_orientation,
    graph_to_instance,
    orient,
    solve_balance,
    solve_balance_detailed,
    to_graph,
    weo_violations,
)
from artifact.generators import gen_hardness_instance, gen_restricted, random_formula
from artifact.oracles import brute_force_opt

# %% A random instance and its graph
inst = gen_restricted(4, 9, 20, seed=5)
g = to_graph(inst)
print(f"{g.n} agents, {len(g.edges)} edges")
for k, (u, v, wu, wv) in enumerate(g.edges):
    print(f"  item {g.items[k]}: {u} ({wu}) -- {v} ({wv})")

# %% Orientation alone: each agent keeps half of its weight minus the heaviest edge
heads = orient(g)
print("violations:", weo_violations(g, heads) or "none")

# %% The full algorithm against the exact optimum
eps = Fraction(1, 20)
res = solve_balance_detailed(inst, eps)
opt, _ = brute_force_opt(inst)
print(f"LP target {res.target}, rounded value {res.value}, optimum {opt}")
print(f"ratio {float(opt / res.value) if res.value else float('inf'):.3f} (guarantee {float(2 + eps)})")

# %% The gadget built from a satisfiable formula has optimum exactly 1
formula = random_formula(3, seed=1)
gadget = gen_hardness_instance(formula)
best, _ = brute_force_orientation(gadget)
val, _ = solve_balance(graph_to_instance(gadget), eps)
print(f"formula {formula}: optimum {best}, balance finds {val}")
