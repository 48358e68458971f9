"""Acceptance criteria 1-10, one test each.

Every test appends a PASS/FAIL line to the summary printed at the end of
the run (see conftest.py) and then asserts, so a failed criterion shows up
both in the summary and as a red test. Exact checks use Fractions with
tolerance 0; the only float tolerance is the LP feasibility residual in
criterion 6, pinned at LP_TOL.
"""

import time
import warnings
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from artifact.balancing import (
    WeightedGraph,
    brute_force_orientation,
    graph_to_instance,
    orient,
    solve_balance,
    solve_balance_detailed,
)
from artifact.canonical import CanonicalInstance, LightSpec, TrivialRegime, canonicalize, embed_solution, lift_solution
from artifact.flownet import assign_private_items
from artifact.generators import (
    gap_after_first_iteration,
    gen_gap_instance,
    gen_hardness_instance,
    gen_planted_canonical,
    gen_random,
    gen_restricted,
    random_formula,
)
from artifact.instance import Instance, agent_utilities, value
from artifact.layered_lp import FractionalSolution, build_layered_graph, build_lp, solve_lp
from artifact.oracles import branch_and_bound_opt, brute_force_opt, solve_vector_enumeration
from artifact.rounding import (
    IterationState,
    bs_decompose,
    merge_Q,
    multiplicity,
    rescue_flow,
    solve,
    tree_assignment,
)
from artifact.rounding.bs import check_rows
from conftest import ACCEPTANCE_LINES

LP_TOL = 1e-6
EPS_BALANCE = Fraction(1, 20)


def record(n: int, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    in_time = elapsed < budget
    verdict = "PASS" if ok and in_time else "FAIL"
    ACCEPTANCE_LINES.append(f"{verdict} criterion {n}: {detail} [{elapsed:.1f}s of {budget:.0f}s]")
    assert ok, detail
    assert in_time, f"criterion {n} took {elapsed:.1f}s, budget {budget}s"


# 1 ------------------------------------------------------------------------

def random_multigraph(seed: int) -> WeightedGraph:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    m = int(rng.integers(0, 201))
    edges = []
    for _ in range(m):
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        wu = int(rng.integers(1, 101))
        wv = wu if u == v else int(rng.integers(1, 101))
        edges.append((u, v, wu, wv))
    return WeightedGraph(n, tuple(edges))


def weo_holds(g: WeightedGraph, heads) -> bool:
    """Recount in-weight, total and heaviest incident weight per vertex."""
    total = [Fraction(0)] * g.n
    top = [Fraction(0)] * g.n
    inw = [Fraction(0)] * g.n
    for (u, v, wu, wv), head in zip(g.edges, heads):
        if head not in (u, v):
            return False
        for x, w in {u: wu, v: wv}.items():
            total[x] += w
            top[x] = max(top[x], w)
        inw[head] += wu if head == u else wv
    return all(2 * inw[x] >= total[x] - top[x] for x in range(g.n))


def test_criterion_1_orientation_inequality():
    t0 = time.perf_counter()
    bad = []
    for seed in range(1000):
        g = random_multigraph(seed)
        heads = orient(g)
        if len(heads) != len(g.edges) or not weo_holds(g, heads):
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    record(1, not bad, f"weo inequality on 1000 multigraphs, failing seeds {bad[:5]}", elapsed, 5)


# 2 and 3 -------------------------------------------------------------------

def restricted_suite():
    for seed in range(200):
        yield seed, gen_restricted(2 + seed % 4, 3 + seed % 8, 20, seed)


def test_criterion_2_two_restricted_end_to_end():
    t0 = time.perf_counter()
    bad = []
    for seed, inst in restricted_suite():
        opt, _ = brute_force_opt(inst)
        val, alloc = solve_balance(inst, EPS_BALANCE)
        if val != value(inst, alloc) or val * (2 + EPS_BALANCE) < opt:
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    record(2, not bad, f"solve_balance >= OPT/2.05 on 200 instances, failing seeds {bad[:5]}", elapsed, 30)


def z_support_ok(inst: Instance, res) -> bool:
    """Exact re-check of the configuration LP support returned with the result."""
    from artifact.balancing import to_graph

    g = to_graph(inst)
    sol = res.lp
    inc = g.incident()
    mass = [Fraction(0)] * len(g.edges)
    for a in range(g.n):
        cfgs = sol.z.get(a, [])
        if sum((w for _, w in cfgs), Fraction(0)) != 1:
            return False
        for S, w in cfgs:
            if w < 0 or not set(S) <= set(inc[a]):
                return False
            if sum((g.weight(a, k) for k in S), Fraction(0)) < sol.target:
                return False
            for k in S:
                mass[k] += w
    return all(x <= 1 for x in mass)


def test_criterion_3_configuration_lp_gap_direction():
    t0 = time.perf_counter()
    bad, checked = [], 0
    for seed, inst in restricted_suite():
        res = solve_balance_detailed(inst, EPS_BALANCE)
        if res.lp is None:
            continue
        checked += 1
        if not z_support_ok(inst, res) or 2 * res.value < (1 - EPS_BALANCE) * res.M_lp:
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    record(3, not bad and checked > 0,
           f"value >= (1-eps) M_LP / 2 with re-verified z on {checked} LP-feasible instances, "
           f"failing seeds {bad[:5]}", elapsed, 30)


# 4 -------------------------------------------------------------------------

def test_criterion_4_hardness_gadget():
    t0 = time.perf_counter()
    bad = []
    for seed in range(20):
        formula = random_formula(2 + seed % 3, seed)
        g = gen_hardness_instance(formula)
        opt, _ = brute_force_orientation(g)
        val, _ = solve_balance(graph_to_instance(g), EPS_BALANCE)
        if opt != 1 or val * (2 + EPS_BALANCE) < 1:
            bad.append((seed, opt, val))
    elapsed = time.perf_counter() - t0
    record(4, not bad, f"orientation optimum 1 and balance >= 1/2.05 on 20 formulas, failures {bad[:3]}",
           elapsed, 10)


# 5 -------------------------------------------------------------------------

def random_fractional_assignment(seed: int):
    """Convex combination of partial matchings: item rows <= 1, x = 1 - agent load."""
    rng = np.random.default_rng(seed)
    na = int(rng.integers(1, 13))
    ni = int(rng.integers(1, 17))
    weights = [int(w) for w in rng.integers(1, 7, size=int(rng.integers(1, 5)))]
    total = sum(weights)
    y: dict = {}
    for w in weights:
        perm = rng.permutation(ni)
        for a in range(min(na, ni)):
            if rng.random() < 0.7:
                e = (a, int(perm[a]))
                y[e] = y.get(e, Fraction(0)) + Fraction(w, total)
    x = {a: 1 - sum((v for (b, _), v in y.items() if b == a), Fraction(0)) for a in range(na)}
    return list(range(na)), list(range(ni)), x, y


def bs_case_ok(agents, items, x, y) -> bool:
    if check_rows(agents, items, x, y):
        return False
    # check=True re-verifies the rows after every intermediate step and raises otherwise
    dec = bs_decompose(agents, items, x, y, check=True)
    for tree in dec.trees:
        deg: dict = {}
        for _, i in tree.edges:
            deg[i] = deg.get(i, 0) + 1
        if set(deg) != set(tree.items) or any(d != 2 for d in deg.values()):
            return False
        if len(tree.edges) != len(tree.agents) + len(tree.items) - 1:
            return False
        if not sum((x[a] for a in tree.agents), Fraction(0)) > Fraction(1, 2):
            return False
        for root in tree.agents:
            assign = tree_assignment(tree, root)
            if set(assign) != set(tree.agents) - {root} or set(assign.values()) != set(tree.items):
                return False
            if len(set(assign.values())) != len(assign) or any((a, i) not in tree.edges for a, i in assign.items()):
                return False
    return True


def test_criterion_5_bs_decomposition():
    t0 = time.perf_counter()
    bad = [seed for seed in range(300) if not bs_case_ok(*random_fractional_assignment(seed))]
    elapsed = time.perf_counter() - t0
    record(5, not bad, f"tree shape, x-mass > 1/2 and every-root assignment on 300 cases, failing seeds {bad[:5]}",
           elapsed, 10)


# 6 -------------------------------------------------------------------------

def test_criterion_6_gap_instance():
    t0 = time.perf_counter()
    notes = []
    ok = True
    for M in (2, 3):
        ci, pa = gen_gap_instance(M)
        sol = solve_lp(build_lp(build_layered_graph(ci, pa, 2)))
        lp_ok = isinstance(sol, FractionalSolution) and sol.max_violation < LP_TOL
        inst = ci.to_instance()
        opt, alloc = brute_force_opt(inst)
        opt_bb, _ = branch_and_bound_opt(inst)
        # the driver resumes at iteration 2 from the state the first iteration leaves behind
        certs = []
        for thr in (None, 2):
            cj, done, P, Q = gap_after_first_iteration(M, thr)
            T = frozenset(a for a in cj.heavy if a not in P)
            res = solve(cj, h=2, alpha=2, start=IterationState(2, done, T, P, Q), prescaled=True)
            certs.append(not res.feasible and res.certificate.verified and res.trace[-1]["iteration"] == 2)
        ok &= lp_ok and opt == 1 and opt_bb == 1 and all(certs)
        notes.append(f"M={M}: LP {'feasible' if lp_ok else 'NOT feasible'}, OPT {opt}/{opt_bb}, "
                     f"second-iteration certificates {certs}")
    elapsed = time.perf_counter() - t0
    record(6, ok, "; ".join(notes), elapsed, 60)


# 7 -------------------------------------------------------------------------

def planted_case(seed: int):
    h = 1 + seed % 2
    N = 16 if h == 1 else 24
    nt = 1 + (seed // 2) % (3 if h == 1 else 2)
    ci, planted = gen_planted_canonical(seed, n_terminals=nt, N=N, noise=2 + seed % 3, terminal_noise=False)
    return ci, planted, h


def holdings(alloc) -> dict:
    out: dict = {}
    for i, a in alloc.owner.items():
        out.setdefault(a, set()).add(i)
    return out


def pipeline_case(seed: int):
    """Returns (ok, kind, worst ratio of light items to N_A/(2(h+1)alpha))."""
    ci, planted, h = planted_case(seed)
    alpha = 2
    assert ci.n_items <= 60
    held = holdings(planted)
    assert all(held.get(a, set()) & g for a, g in ci.heavy.items())  # planted solution is 1-satisfying
    res = solve(ci, h=h, alpha=alpha, seed=seed)
    for rec in res.trace:
        if rec["lp"] == "feasible" and rec["terminals"] > 0 and rec["next_terminals"] >= rec["terminals"]:
            return False, "no progress", None
    if not res.feasible:
        return bool(res.certificate.verified), "certificate", None
    sci, state = res.scaled, res.state
    if any(c > 1 for c in multiplicity(state.Q).values()):
        return False, "carried paths overlap", None
    held = holdings(res.allocation)
    terminals = assign_private_items(sci).T
    if not all(held.get(a, set()) & sci.heavy[a] for a in sci.heavy):
        return False, "heavy agent unfed", None
    if not all(held.get(a, set()) & sci.heavy[a] for a in terminals):
        return False, "terminal unfed", None
    worst = None
    for a, spec in sci.light.items():
        mine = held.get(a, set())
        if spec.heavy_item in mine:
            continue
        got = len(mine & spec.light_items)
        if got == 0 or got < spec.N / res.alpha_final:
            return False, f"light agent {a} has {got}", None
        ratio = Fraction(got) / (ci.light[a].N / (2 * (h + 1) * alpha))
        worst = ratio if worst is None else min(worst, ratio)
    return True, "allocation", worst


def test_criterion_7_full_pipeline():
    t0 = time.perf_counter()
    outcomes: dict = {}
    bad = []
    worst = None
    for seed in range(50):
        ok, kind, ratio = pipeline_case(seed)
        outcomes[kind] = outcomes.get(kind, 0) + 1
        if not ok:
            bad.append((seed, kind))
        if ratio is not None:
            worst = ratio if worst is None else min(worst, ratio)
    elapsed = time.perf_counter() - t0
    ratio_txt = "n/a" if worst is None else f"{float(worst):.3f}"
    record(7, not bad,
           f"alpha=2, outcomes {outcomes}, worst light count over N_A/(2(h+1)alpha) = {ratio_txt}, "
           f"failures {bad[:3]}", elapsed, 300)


# 8 -------------------------------------------------------------------------

def crafted_family(seed: int):
    """Receivers fed by free items, directly or through shared heavy relays.

    Returns the canonical instance, private items, receivers, and a list of
    paths in which relays and free items repeat across paths.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    n_relay = int(rng.integers(1, 5))
    n_free = int(rng.integers(2, 9))
    receivers = list(range(k))
    relays = list(range(k, k + n_relay))
    h_item = {a: a for a in receivers}
    p_item = {b: k + j for j, b in enumerate(relays)}
    free = list(range(k + n_relay, k + n_relay + n_free))
    wants_heavy: dict = {b: {p_item[b]} for b in relays}
    wants_light: dict = {a: set() for a in receivers}
    paths = []
    for a in receivers:
        # one direct path each, so every sender is also a receiver
        i = free[int(rng.integers(n_free))]
        wants_light[a].add(i)
        paths.append((("I", i), ("A", a)))
        for _ in range(int(rng.integers(0, 7))):
            shape = rng.integers(3)
            b = relays[int(rng.integers(n_relay))]
            if shape == 0:
                i = free[int(rng.integers(n_free))]
                wants_light[a].add(i)
                paths.append((("I", i), ("A", a)))
            elif shape == 1:
                i = free[int(rng.integers(n_free))]
                wants_heavy[b].add(i)
                wants_light[a].add(p_item[b])
                paths.append((("I", i), ("A", b), ("I", p_item[b]), ("A", a)))
            else:
                s = receivers[int(rng.integers(k))]
                if s == a:
                    continue
                wants_heavy[b].add(h_item[s])
                wants_light[a].add(p_item[b])
                paths.append((("A", s), ("I", h_item[s]), ("A", b), ("I", p_item[b]), ("A", a)))
    P = {**h_item, **p_item}
    return k, relays, P, free, wants_heavy, wants_light, paths, k + n_relay + n_free


def make_ci(n_items, receivers, N, P, wants_heavy, wants_light):
    light = {a: LightSpec(P[a], Fraction(N[a]), frozenset(wants_light[a] - {P[a]})) for a in receivers}
    return CanonicalInstance(1, n_items, {b: frozenset(g) for b, g in wants_heavy.items()}, light, base_n=1)


def nx_max_paths(ci, P, senders, quotas) -> int:
    """Disjoint-path count from a separately built networkx graph."""
    g = nx.DiGraph()
    g.add_node("S")
    g.add_node("T")
    owned = set(P.values())
    for i in range(ci.n_items):
        g.add_edge(("i", i), ("o", i), capacity=1)
        if i not in owned:
            g.add_edge("S", ("i", i), capacity=1)
    for b, gamma in ci.heavy.items():
        g.add_edge(("ai", b), ("ao", b), capacity=1)
        g.add_edge(("ao", b), ("i", P[b]), capacity=1)
        for i in gamma - {P[b]}:
            g.add_edge(("o", i), ("ai", b), capacity=1)
    for a in senders:
        g.add_edge("S", ("i", P[a]), capacity=1)
    for a, q in quotas.items():
        if q > 0:
            for i in ci.light[a].light_items:
                g.add_edge(("o", i), ("r", a), capacity=1)
            g.add_edge(("r", a), "T", capacity=q)
    return nx.maximum_flow_value(g, "S", "T")


def output_ok(ci, P, res, senders) -> bool:
    if any(c > 1 for c in multiplicity(res.paths).values()):
        return False
    got = res.incoming()
    if any(got.get(a, 0) != q for a, q in res.quotas.items()):
        return False
    return nx_max_paths(ci, P, senders, res.quotas) == sum(res.quotas.values())


def disjoint_subfamily(paths, rng):
    taken: set = set()
    out = []
    for idx in rng.permutation(len(paths)):
        p = paths[int(idx)]
        if taken.isdisjoint(p[:-1]):
            out.append(p)
            taken |= set(p[:-1])
    return out


def rescue_case(seed: int) -> bool:
    k, relays, P, free, wh, wl, paths, n_items = crafted_family(seed)
    receivers = sorted({p[-1][1] for p in paths})
    incoming = {a: sum(1 for p in paths if p[-1][1] == a) for a in receivers}
    beta = max(multiplicity(paths).values())
    # largest N with at least N/2 incoming paths per receiver
    N = {a: 2 * incoming[a] for a in receivers}
    ci = make_ci(n_items, range(k), {**{a: 1 for a in range(k)}, **N}, P, wh, wl)
    res = rescue_flow(ci, P, paths, receivers, beta)
    senders = {p[0][1] for p in paths if p[0][0] == "A"}
    if res.quotas != {a: (2 * incoming[a]) // (2 * beta) for a in receivers}:
        return False
    return output_ok(ci, P, res, senders)


def merge_case(seed: int) -> bool:
    rng = np.random.default_rng(10_000 + seed)
    k, relays, P, free, wh, wl, paths, n_items = crafted_family(seed)
    p2 = disjoint_subfamily(paths, rng)
    q = disjoint_subfamily(paths, rng)
    alpha, alpha_j = 1, int(rng.choice([1, 2, 3, 5]))
    receivers = sorted({p[-1][1] for p in p2 + q})
    starters = {p[0][1] for p in p2 + q if p[0][0] == "A"}
    satisfied = [a for a in range(k) if a not in starters and rng.random() < 0.5]
    witness = {a: Fraction(0) for a in receivers}
    for fam, w in ((p2, Fraction(alpha, alpha_j + alpha)), (q, Fraction(alpha_j, alpha_j + alpha))):
        for p in fam:
            witness[p[-1][1]] += w
    N = {a: max(1, int(witness[a] * (alpha_j + alpha))) for a in receivers}
    ci = make_ci(n_items, range(k), {**{a: 1 for a in range(k)}, **N}, P, wh, wl)
    res = merge_Q(ci, P, p2, q, receivers, satisfied, alpha, alpha_j)
    if res.quotas != {a: N[a] // (alpha_j + alpha) for a in receivers}:
        return False
    return output_ok(ci, P, res, [a for a in receivers if a not in satisfied])


def test_criterion_8_rescue_and_merge():
    t0 = time.perf_counter()
    bad = [("rescue", s) for s in range(50) if not rescue_case(s)]
    bad += [("merge", s) for s in range(50) if not merge_case(s)]
    elapsed = time.perf_counter() - t0
    record(8, not bad, f"floor quotas met exactly, disjoint, max-flow cross-check on 100 families, "
                       f"failures {bad[:5]}", elapsed, 10)


# 9 -------------------------------------------------------------------------

def test_criterion_9_vector_enumeration():
    t0 = time.perf_counter()
    bad = []
    for seed in range(30):
        inst = gen_random(1 + seed % 3, 3 + seed % 6, 0.6, 40, seed)
        opt, _ = brute_force_opt(inst)
        val, alloc = solve_vector_enumeration(inst)
        if val != value(inst, alloc) or not (4 * val >= opt >= val):
            bad.append((seed, opt, val))
    elapsed = time.perf_counter() - t0
    record(9, not bad, f"OPT/4 <= value <= OPT on 30 instances, failures {bad[:3]}", elapsed, 20)


# 10 ------------------------------------------------------------------------

def test_criterion_10_canonical_round_trip():
    t0 = time.perf_counter()
    bad, done, skipped, seed = [], 0, 0, 0
    eps = Fraction(1, 4)
    while done < 30:
        # integer utilities in [1, 30] already satisfy the "utilities >= 1" normalization
        inst = gen_random(2 + seed % 2, 6, 0.7, 30, seed)
        seed += 1
        opt, alloc = brute_force_opt(inst)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ci, back = canonicalize(inst, opt, eps)
        except TrivialRegime:
            skipped += 1
            continue
        done += 1
        lifted = lift_solution(embed_solution(inst, alloc, ci, back), back, ci, 1)
        bound = min(Fraction(2) ** back.s, opt / (2 * back.s))
        if min(agent_utilities(inst, lifted)) < bound:
            bad.append(seed - 1)
    elapsed = time.perf_counter() - t0
    record(10, not bad, f"lifted utility >= min(2^s, M/(2s)) on 30 instances ({skipped} trivial skipped), "
                        f"failing seeds {bad[:5]}", elapsed, 20)
