"""Seeded instance generators: random, 2-restricted, planted canonical, gap and hardness."""
from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Sequence

import numpy as np

from .balancing import WeightedGraph
from .canonical import CanonicalInstance, LightSpec
from .flownet import PrivateAssignment, make_private
from .instance import Allocation, Instance, InstanceError

__all__ = [
    "gen_random",
    "gen_restricted",
    "gen_gap_instance",
    "gap_second_iteration",
    "gen_hardness_instance",
    "random_formula",
    "formula_satisfiable",
    "gen_planted_canonical",
    "GapLayout",
]


def gen_random(m: int, n: int, density: float, max_utility: int, seed: int) -> Instance:
    """Each (agent, item) pair is nonzero with probability ``density``."""
    if m < 1 or n < 1 or max_utility < 1 or not (0 < density <= 1):
        raise InstanceError("need m, n, max_utility >= 1 and density in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < density
    vals = rng.integers(1, max_utility + 1, size=(m, n))
    util = {(a, i): int(vals[a, i]) for a in range(m) for i in range(n) if mask[a, i]}
    return Instance(m, n, util)


def gen_restricted(m: int, n: int, max_utility: int, seed: int, loop_prob: float = 0.2) -> Instance:
    """Random 2-restricted instance: every item wanted by one or two agents."""
    if m < 1 or n < 1:
        raise InstanceError("need m, n >= 1")
    rng = np.random.default_rng(seed)
    util = {}
    for i in range(n):
        if m == 1 or rng.random() < loop_prob:
            a = int(rng.integers(m))
            util[(a, i)] = int(rng.integers(1, max_utility + 1))
        else:
            a, b = (int(x) for x in rng.choice(m, size=2, replace=False))
            util[(a, i)] = int(rng.integers(1, max_utility + 1))
            util[(b, i)] = int(rng.integers(1, max_utility + 1))
    return Instance(m, n, util)


class GapLayout:
    """Agent and item ids of the gap construction with parameter ``M``.

    Gadget ``g`` (0-based) holds light agents ``light[g][j]`` with heavy
    items ``h_light[g][j]`` and private light-item lists ``light_items[g][j]``,
    terminals ``terminals[g]``, the agent ``star[g]`` and its heavy item
    ``h_star[g]``. ``top`` is the global terminal.
    """

    def __init__(self, M: int):
        self.M = M
        agent = itertools.count()
        item = itertools.count()
        self.light = [[next(agent) for _ in range(M)] for _ in range(M)]
        self.terminals = [[next(agent) for _ in range(M - 1)] for _ in range(M)]
        self.star = [next(agent) for _ in range(M)]
        self.top = next(agent)
        self.light_items = [[[next(item) for _ in range(M)] for _ in range(M)] for _ in range(M)]
        self.h_light = [[next(item) for _ in range(M)] for _ in range(M)]
        self.h_star = [next(item) for _ in range(M)]
        self.m = next(agent)
        self.n = next(item)


def gen_gap_instance(M: int, epsilon=Fraction(1, 2)) -> tuple[CanonicalInstance, PrivateAssignment]:
    """Canonical instance whose layered LP is feasible at M while the optimum is 1."""
    if M < 2:
        raise InstanceError("gap construction needs M >= 2")
    L = GapLayout(M)
    heavy, light = {}, {}
    for g in range(M):
        for j in range(M):
            light[L.light[g][j]] = LightSpec(L.h_light[g][j], Fraction(M), frozenset(L.light_items[g][j]))
        for t in L.terminals[g]:
            heavy[t] = frozenset(L.h_light[g])
        light[L.star[g]] = LightSpec(L.h_star[g], Fraction(M), frozenset(L.h_light[g]))
    heavy[L.top] = frozenset(L.h_star)
    # thresholds are compared against a base n of 1 so N = M passes at any size
    ci = CanonicalInstance(Fraction(M), L.n, heavy, light, epsilon, base_n=1)
    P = {a: spec.heavy_item for a, spec in light.items()}
    return ci, make_private(ci, P)


def gap_second_iteration(M: int, star_threshold: int | None = None,
                         epsilon=Fraction(1, 2)) -> tuple[CanonicalInstance, PrivateAssignment]:
    """The gap instance with L_1..L_{M-1} removed and terminals t_i given h(L_i).

    Only the global terminal is left without a private item. The threshold
    of every starred agent can be lowered (to 2, say) to show the LP stays
    infeasible.
    """
    ci, _ = gen_gap_instance(M, epsilon)
    L = GapLayout(M)
    drop = {L.light[g][j] for g in range(M) for j in range(M - 1)}
    ci = ci.restrict(a for a in ci.agents if a not in drop)
    if star_threshold is not None:
        light = dict(ci.light)
        for g in range(M):
            spec = light[L.star[g]]
            light[L.star[g]] = LightSpec(spec.heavy_item, Fraction(star_threshold), spec.light_items)
        ci = CanonicalInstance(ci.M, ci.n_items, ci.heavy, light, ci.epsilon, ci.base_n)
    P = {a: spec.heavy_item for a, spec in ci.light.items()}
    for g in range(M):
        for j, t in enumerate(L.terminals[g]):
            P[t] = L.h_light[g][j]
    return ci, make_private(ci, P)


def gap_after_first_iteration(M: int, star_threshold: int | None = None, epsilon=Fraction(1, 2)):
    """Driver state after the first iteration on the gap instance.

    Returns ``(ci, L, P, Q)``: the full instance (thresholds of the starred
    agents optionally replaced), the satisfied agents L_1..L_{M-1} of every
    gadget, the private items with t_i holding h(L_i), and one single-edge
    path per private light item of every satisfied agent.
    """
    ci, _ = gen_gap_instance(M, epsilon)
    L = GapLayout(M)
    if star_threshold is not None:
        light = dict(ci.light)
        for g in range(M):
            spec = light[L.star[g]]
            light[L.star[g]] = LightSpec(spec.heavy_item, Fraction(star_threshold), spec.light_items)
        ci = CanonicalInstance(ci.M, ci.n_items, ci.heavy, light, ci.epsilon, ci.base_n)
    done = frozenset(L.light[g][j] for g in range(M) for j in range(M - 1))
    P = {a: spec.heavy_item for a, spec in ci.light.items() if a not in done}
    for g in range(M):
        for j, t in enumerate(L.terminals[g]):
            P[t] = L.h_light[g][j]
    Q = [(("I", i), ("A", L.light[g][j]))
         for g in range(M) for j in range(M - 1) for i in L.light_items[g][j]]
    return ci, done, P, Q


def _literal_vertex(lit: int) -> int:
    v = abs(lit) - 1
    return 2 * v + (1 if lit < 0 else 0)


def gen_hardness_instance(formula: Sequence[Sequence[int]]) -> WeightedGraph:
    """Weighted graph of a 3-CNF where each literal occurs in one or two clauses.

    Literals are vertices ``2(x-1)`` and ``2(x-1)+1`` (negated); clause ``c``
    is vertex ``2 * num_vars + c``. Variable edges weigh 1, clause edges 1/2,
    and every clause and every literal used once gets a 1/2 self-loop.
    """
    clauses = [tuple(c) for c in formula]
    if not clauses:
        raise InstanceError("formula has no clauses")
    for k, c in enumerate(clauses):
        if len(c) != 3 or 0 in c:
            raise InstanceError(f"clause {k} must have exactly three nonzero literals")
        if len({abs(x) for x in c}) != 3:
            raise InstanceError(f"clause {k} repeats a variable")
    nv = max(abs(x) for c in clauses for x in c)
    count: dict[int, int] = {}
    for c in clauses:
        for x in c:
            count[x] = count.get(x, 0) + 1
    for v in range(1, nv + 1):
        for lit in (v, -v):
            occ = count.get(lit, 0)
            if not (1 <= occ <= 2):
                raise InstanceError(f"literal {lit} occurs in {occ} clauses; need 1 or 2")
    half = Fraction(1, 2)
    edges = []
    for v in range(1, nv + 1):
        edges.append((_literal_vertex(v), _literal_vertex(-v), Fraction(1), Fraction(1)))
    for k, c in enumerate(clauses):
        cv = 2 * nv + k
        for x in c:
            edges.append((cv, _literal_vertex(x), half, half))
    for k in range(len(clauses)):
        cv = 2 * nv + k
        edges.append((cv, cv, half, half))
    for v in range(1, nv + 1):
        for lit in (v, -v):
            if count[lit] == 1:
                lv = _literal_vertex(lit)
                edges.append((lv, lv, half, half))
    return WeightedGraph(2 * nv + len(clauses), tuple(edges))


def formula_satisfiable(formula: Sequence[Sequence[int]]) -> bool:
    nv = max(abs(x) for c in formula for x in c)
    for bits in itertools.product([False, True], repeat=nv):
        if all(any(bits[abs(x) - 1] == (x > 0) for x in c) for c in formula):
            return True
    return False


def random_formula(n_clauses: int, seed: int, satisfiable: bool = True,
                   max_tries: int = 10000) -> list[tuple[int, int, int]]:
    """Random 3-CNF meeting the occurrence bounds (each literal in 1 or 2 clauses)."""
    if n_clauses < 2:
        raise InstanceError("need at least two clauses to use every literal")
    rng = np.random.default_rng(seed)
    occ = 3 * n_clauses
    choices = [v for v in range((occ + 3) // 4, occ // 2 + 1)]
    for _ in range(max_tries):
        nv = int(rng.choice(choices))
        lits = [x for v in range(1, nv + 1) for x in (v, -v)]
        extra = rng.choice(len(lits), size=occ - len(lits), replace=False)
        pool = lits + [lits[k] for k in extra]
        rng.shuffle(pool)
        clauses = [tuple(int(x) for x in pool[3 * k:3 * k + 3]) for k in range(n_clauses)]
        if any(len({abs(x) for x in c}) != 3 for c in clauses):
            continue
        if satisfiable and not formula_satisfiable(clauses):
            continue
        return clauses
    raise InstanceError(f"no formula found in {max_tries} tries")


def gen_planted_canonical(seed: int, n_terminals: int = 2, N: int = 3, depth: int = 1,
                          spare: int = 2, noise: int = 2, epsilon=Fraction(1, 2),
                          terminal_noise: bool = True) -> tuple[CanonicalInstance, Allocation]:
    """Random canonical instance with a planted 1-satisfying allocation.

    Each planted terminal is fed by a tree of light agents ``depth`` levels
    deep. A bottom-level light agent owns ``N`` free items; a higher one is
    fed by ``N`` lower light agents, each handing its heavy item to a relay
    heavy agent that passes on a fresh item. ``spare`` heavy agents hold
    their own item, and every agent gets ``noise`` random extra items to
    create competing edges; with ``terminal_noise`` off the planted
    terminals keep a single admissible item, so they stay terminals under
    any private assignment. Returns the instance and the planted allocation.
    """
    rng = np.random.default_rng(seed)
    agent = itertools.count()
    item = itertools.count()
    heavy: dict[int, set[int]] = {}
    light: dict[int, tuple[int, set[int]]] = {}
    owner: dict[int, int] = {}

    def build_light(level: int) -> int:
        a = next(agent)
        h = next(item)
        feed = set()
        for _ in range(N):
            if level == 1:
                i = next(item)
            else:
                child = build_light(level - 1)
                relay = next(agent)
                i = next(item)
                hi = light[child][0]
                heavy[relay] = {hi, i}
                owner[hi] = relay
            feed.add(i)
            owner[i] = a
        light[a] = (h, feed)
        return a

    tops = set()
    for _ in range(n_terminals):
        top = build_light(depth)
        t = next(agent)
        tops.add(t)
        heavy[t] = {light[top][0]}
        owner[light[top][0]] = t
    for _ in range(spare):
        b = next(agent)
        own = next(item)
        heavy[b] = {own}
        owner[own] = b
    n_items = next(item)
    k = min(noise, n_items)
    for b in sorted(heavy):
        if b in tops and not terminal_noise:
            continue
        heavy[b].update(int(i) for i in rng.choice(n_items, size=k, replace=False))
    for a in sorted(light):
        h, feed = light[a]
        feed.update(int(i) for i in rng.choice(n_items, size=k, replace=False) if int(i) != h)
    # thresholds are compared against a base n of 1 so small N is admissible
    ci = CanonicalInstance(
        Fraction(N), n_items,
        {b: frozenset(g) for b, g in heavy.items()},
        {a: LightSpec(h, Fraction(N), frozenset(f)) for a, (h, f) in light.items()},
        epsilon, base_n=1)
    return ci, Allocation(owner)
