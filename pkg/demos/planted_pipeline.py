"""The terminal-shrinking driver on planted canonical instances.

A planted instance hides a 1-satisfying allocation. Thresholds are first
divided by h + 1. Each iteration rounds a layered LP solution, and the
trace records how many terminals are left afterwards.
Run with ``python3 demos/planted_pipeline.py``.
"""
from artifact.generators import gen_planted_canonical
from artifact.rounding import solve, verify_canonical_allocation

# desk scale: the default alpha would give zero quotas, so alpha = 2 and N >= 16
for seed, h, N in [(0, 1, 16), (3, 2, 24)]:
    ci, planted = gen_planted_canonical(seed, n_terminals=2, N=N, terminal_noise=False)
    res = solve(ci, h=h, alpha=2, seed=seed)
    print(f"seed {seed}: {len(ci.heavy)} heavy and {len(ci.light)} light agents, {ci.n_items} items, h={h}")
    for rec in res.trace:
        print(f"  iteration {rec['iteration']}: {rec['terminals']} terminals -> {rec.get('next_terminals')}, "
              f"congestion {rec.get('congestion')}, LP {rec.get('lp_rows')}x{rec.get('lp_cols')}")
    problems = verify_canonical_allocation(res.scaled, res.allocation, res.alpha_final)
    print(f"  alpha_final {res.alpha_final}, verification: {problems or 'ok'}")
