"""2-restricted instances as weighted graphs: configuration LP and orientation.

Every item is wanted by at most two agents, so an instance is a multigraph
on agents with one edge per item and a separate weight at each endpoint.
A good orientation hands each edge to its head; the configuration LP
decides which items are fixed up front.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .exact import ExactRecoveryError, exact_solve, rationalize
from .instance import Allocation, Instance, InstanceError, as_fraction

__all__ = [
    "BalanceError",
    "WeightedGraph",
    "to_graph",
    "graph_to_instance",
    "orient",
    "find_cycle",
    "weo_violations",
    "brute_force_orientation",
    "ConfigLPSolution",
    "ConfigLPInfeasible",
    "solve_config_lp",
    "Classification",
    "classify_items",
    "BalanceResult",
    "solve_balance_detailed",
    "solve_balance",
    "DP_STATE_LIMIT",
    "SUBSET_SUM_LIMIT",
]

DP_STATE_LIMIT = 10**6
SUBSET_SUM_LIMIT = 10**5
_TOL = 1e-9


class BalanceError(InstanceError):
    pass


@dataclass(frozen=True)
class WeightedGraph:
    """Multigraph with per-endpoint weights; edge ``k`` is ``(u, v, w_u, w_v)``."""

    n: int
    edges: tuple
    # original item id of every edge, when the graph came from an instance
    items: tuple | None = None

    def __post_init__(self):
        clean = []
        for k, (u, v, wu, wv) in enumerate(self.edges):
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise BalanceError(f"edge {k} has endpoint outside [0, {self.n})")
            wu, wv = as_fraction(wu), as_fraction(wv)
            if wu < 0 or wv < 0:
                raise BalanceError(f"edge {k} has a negative weight")
            if u == v and wu != wv:
                raise BalanceError(f"self-loop {k} has two different weights")
            clean.append((u, v, wu, wv))
        object.__setattr__(self, "edges", tuple(clean))

    def weight(self, vertex: int, k: int) -> Fraction:
        u, v, wu, wv = self.edges[k]
        if vertex == u:
            return wu
        if vertex == v:
            return wv
        raise BalanceError(f"vertex {vertex} is not an endpoint of edge {k}")

    def incident(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for k, (u, v, _, _) in enumerate(self.edges):
            out[u].append(k)
            if v != u:
                out[v].append(k)
        return out


def to_graph(inst: Instance) -> WeightedGraph:
    """One edge per wanted item; an item wanted by a single agent is a self-loop."""
    edges, items = [], []
    for i, ws in enumerate(inst.by_item()):
        if len(ws) > 2:
            raise BalanceError(f"item {i} is wanted by {len(ws)} agents {ws}; not 2-restricted")
        if not ws:
            continue
        a = ws[0]
        b = ws[-1]
        edges.append((a, b, inst.u(a, i), inst.u(b, i)))
        items.append(i)
    return WeightedGraph(inst.m, tuple(edges), tuple(items))


def graph_to_instance(g: WeightedGraph) -> Instance:
    util = {}
    for k, (u, v, wu, wv) in enumerate(g.edges):
        util[(u, k)] = wu
        util[(v, k)] = wv
    return Instance(g.n, max(1, len(g.edges)), util)


class _Ranking:
    """Incident edges of every vertex, heaviest first, sorted once.

    Edges only ever leave ``adj``, so a per-vertex cursor skips dead entries
    for good and the top two live edges cost amortized O(1).
    """

    def __init__(self, g: WeightedGraph, adj: Mapping[int, set[int]]):
        self.order = {v: sorted(ks, key=lambda k, v=v: (-g.weight(v, k), k)) for v, ks in adj.items()}
        self.cursor = dict.fromkeys(adj, 0)

    def top_two(self, v: int, live: set[int]) -> list[int]:
        order, c = self.order[v], self.cursor[v]
        while order[c] not in live:
            c += 1
        self.cursor[v] = c
        nxt = c + 1
        while order[nxt] not in live:
            nxt += 1
        return [order[c], order[nxt]]


def find_cycle(g: WeightedGraph, adj: Mapping[int, set[int]], start: int,
               ranking: _Ranking | None = None) -> list[tuple[int, int]]:
    """Cycle whose reversed traversal is safe to orient, as (edge, head) pairs.

    The walk leaves each vertex by its heaviest edge unless it arrived on
    that edge, in which case it leaves by the second heaviest. At the first
    repeated vertex the tail before it is dropped. Orienting every cycle edge
    back toward the vertex that left through it keeps the inequality.
    """
    if ranking is None:
        ranking = _Ranking(g, adj)
    order = [start]
    pos = {start: 0}
    used: list[int] = []
    arrived = None
    v = start
    while True:
        live = adj[v]
        if len(live) < 2:
            raise BalanceError(f"vertex {v} has degree {len(live)} < 2")
        e1, e2 = ranking.top_two(v, live)
        k = e2 if arrived == e1 else e1
        u, w, _, _ = g.edges[k]
        nxt = w if u == v else u
        used.append(k)
        if nxt in pos:
            r = pos[nxt]
            cyc = order[r:]
            return [(used[r + j], cyc[j]) for j in range(len(cyc))]
        pos[nxt] = len(order)
        order.append(nxt)
        arrived = k
        v = nxt


def orient(g: WeightedGraph) -> list[int]:
    """Head vertex for every edge such that each vertex keeps half its non-max weight."""
    heads = [-1] * len(g.edges)
    adj: dict[int, set[int]] = {v: set() for v in range(g.n)}
    for k, (u, v, _, _) in enumerate(g.edges):
        if u == v:
            heads[k] = u
        else:
            adj[u].add(k)
            adj[v].add(k)
    remaining = sum(1 for h in heads if h < 0)
    ranking = _Ranking(g, adj)
    leaves = [v for v in range(g.n) if len(adj[v]) == 1]
    heapq.heapify(leaves)

    def drop(k: int, head: int) -> None:
        nonlocal remaining
        heads[k] = head
        remaining -= 1
        u, v, _, _ = g.edges[k]
        for x in (u, v):
            adj[x].discard(k)
            if len(adj[x]) == 1:
                heapq.heappush(leaves, x)

    start = 0
    while remaining:
        while leaves:
            v = heapq.heappop(leaves)
            if len(adj[v]) != 1:
                continue
            k = next(iter(adj[v]))
            u, w, _, _ = g.edges[k]
            drop(k, w if u == v else u)
        if not remaining:
            break
        while not adj[start]:
            start += 1
        for k, head in find_cycle(g, adj, start, ranking):
            drop(k, head)
    return heads


def weo_violations(g: WeightedGraph, heads: Sequence[int]) -> list[str]:
    """Vertices where in-weight < (total - max)/2, checked exactly."""
    total = [Fraction(0)] * g.n
    top = [Fraction(0)] * g.n
    inw = [Fraction(0)] * g.n
    for k, (u, v, wu, wv) in enumerate(g.edges):
        ends = [(u, wu)] if u == v else [(u, wu), (v, wv)]
        if heads[k] not in (u, v):
            return [f"edge {k} has head {heads[k]} outside its endpoints"]
        for x, w in ends:
            total[x] += w
            top[x] = max(top[x], w)
            if heads[k] == x:
                inw[x] += w
    return [f"vertex {x}: in-weight {inw[x]} < ({total[x]} - {top[x]})/2"
            for x in range(g.n) if 2 * inw[x] < total[x] - top[x]]


def brute_force_orientation(g: WeightedGraph) -> tuple[Fraction, list[int]]:
    """Best minimum in-weight over all orientations, by pruned backtracking."""
    heads = [-1] * len(g.edges)
    inw = [Fraction(0)] * g.n
    potential = [Fraction(0)] * g.n
    free = []
    for k, (u, v, wu, wv) in enumerate(g.edges):
        if u == v:
            heads[k] = u
            inw[u] += wu
        else:
            free.append(k)
            potential[u] += wu
            potential[v] += wv
    best = [Fraction(-1), list(heads)]

    def go(idx: int) -> None:
        if min(a + b for a, b in zip(inw, potential)) <= best[0]:
            return
        if idx == len(free):
            best[0] = min(inw)
            best[1] = list(heads)
            return
        k = free[idx]
        u, v, wu, wv = g.edges[k]
        potential[u] -= wu
        potential[v] -= wv
        for x, w in sorted([(u, wu), (v, wv)], key=lambda t: inw[t[0]]):
            heads[k] = x
            inw[x] += w
            go(idx + 1)
            inw[x] -= w
        heads[k] = -1
        potential[u] += wu
        potential[v] += wv

    if g.n == 0:
        return Fraction(0), heads
    go(0)
    return best[0], best[1]


@dataclass(frozen=True)
class ConfigLPSolution:
    """Exact support of z for LP at the stated target."""

    target: Fraction
    # agent -> list of (frozenset of edge ids, weight)
    z: Mapping[int, list]

    def item_mass(self, agent: int, k: int) -> Fraction:
        return sum((w for S, w in self.z.get(agent, []) if k in S), Fraction(0))


class ConfigLPInfeasible(BalanceError):
    """LP(target) has no solution; ``duals`` price every configuration non-negatively."""

    def __init__(self, target: Fraction, duals: dict):
        super().__init__(f"configuration LP infeasible at target {target}")
        self.target = target
        self.duals = duals


def _cheapest_cover(weights: list[Fraction], costs: list[float], target: Fraction):
    """Min-cost subset with total weight >= target (knapsack cover by DP)."""
    if target <= 0:
        return 0.0, []
    scale = math.lcm(target.denominator, *[w.denominator for w in weights])
    ints = [int(w * scale) for w in weights]
    T = int(math.ceil(target * scale))
    if sum(ints) < T:
        return math.inf, None
    if T + 1 > DP_STATE_LIMIT:
        raise BalanceError(
            f"pricing DP needs {T + 1} states (limit {DP_STATE_LIMIT}); use coarser utilities or a larger epsilon")
    dp = np.full(T + 1, np.inf)
    dp[0] = 0.0
    took = np.zeros((len(ints), T + 1), dtype=bool)
    for j, (w, c) in enumerate(zip(ints, costs)):
        src = np.arange(T + 1)
        prev = np.maximum(src - w, 0)
        cand = np.empty(T + 1)
        # reaching coverage v >= w uses dp[v - w]; coverage below w is reachable from 0
        cand[:] = dp[prev] + c
        better = cand < dp - 1e-15
        dp = np.where(better, cand, dp)
        took[j] = better
    chosen = []
    v = T
    for j in range(len(ints) - 1, -1, -1):
        if took[j, v]:
            chosen.append(j)
            v = max(v - ints[j], 0)
    return float(dp[T]), sorted(chosen)


def solve_config_lp(g: WeightedGraph, M, epsilon) -> ConfigLPSolution:
    """Configuration LP at target (1 - epsilon) * M by column generation.

    Phase one minimizes artificial slack on the agent rows; pricing is a
    knapsack-cover DP per agent. The final support is re-solved in exact
    rationals and every row is checked before returning.
    """
    M = as_fraction(M)
    eps = as_fraction(epsilon)
    if M <= 0 or not (0 <= eps < 1):
        raise BalanceError("need M > 0 and 0 <= epsilon < 1")
    target = (1 - eps) * M
    inc = g.incident()
    m, E = g.n, len(g.edges)
    cols: list[tuple[int, frozenset]] = []
    seen = set()
    for a in range(m):
        ks = inc[a]
        if sum(g.weight(a, k) for k in ks) >= target:
            col = (a, frozenset(ks))
            cols.append(col)
            seen.add(col)
    duals_out = {}
    for _ in range(500):
        nv = len(cols) + m
        c = np.zeros(nv)
        c[len(cols):] = 1.0
        A_eq = np.zeros((m, nv))
        A_ub = np.zeros((E, nv))
        for j, (a, S) in enumerate(cols):
            A_eq[a, j] = 1
            for k in S:
                A_ub[k, j] = 1
        for a in range(m):
            A_eq[a, len(cols) + a] = 1
        res = linprog(c, A_ub=A_ub if E else None, b_ub=np.ones(E) if E else None,
                      A_eq=A_eq, b_eq=np.ones(m), bounds=(0, None), method="highs")
        if res.status != 0:
            raise BalanceError(f"LP solver failed: {res.message}")
        pi = res.eqlin.marginals
        mu = res.ineqlin.marginals if E else np.zeros(0)
        added = False
        for a in range(m):
            ks = inc[a]
            cost, pick = _cheapest_cover([g.weight(a, k) for k in ks],
                                         [max(0.0, -float(mu[k])) for k in ks], target)
            if pick is None:
                continue
            if cost < pi[a] - 1e-9:
                col = (a, frozenset(ks[j] for j in pick))
                if col not in seen:
                    seen.add(col)
                    cols.append(col)
                    added = True
        duals_out = {"agents": [float(x) for x in pi], "items": [float(x) for x in mu]}
        if not added:
            break
    if res.fun > 1e-7:
        raise ConfigLPInfeasible(target, duals_out)
    # exact recovery on the support
    support = [j for j in range(len(cols)) if res.x[j] > 1e-12]
    tight = [k for k in range(E) if sum(res.x[j] for j in support if k in cols[j][1]) > 1 - 1e-7]
    rows, rhs = [], []
    for a in range(m):
        rows.append([Fraction(1 if cols[j][0] == a else 0) for j in support])
        rhs.append(Fraction(1))
    for k in tight:
        rows.append([Fraction(1 if k in cols[j][1] else 0) for j in support])
        rhs.append(Fraction(1))
    guess = [rationalize(res.x[j]) for j in support]
    try:
        zs = exact_solve(rows, rhs, guess)
    except ExactRecoveryError as exc:
        raise BalanceError(f"exact recovery of the LP vertex failed: {exc}") from exc
    z: dict[int, list] = {}
    for j, val in zip(support, zs):
        if val < 0:
            raise BalanceError("exact LP recovery produced a negative weight")
        if val > 0:
            z.setdefault(cols[j][0], []).append((cols[j][1], val))
    sol = ConfigLPSolution(target, z)
    _verify_config(g, sol)
    return sol


def _verify_config(g: WeightedGraph, sol: ConfigLPSolution) -> None:
    for a in range(g.n):
        tot = sum((w for _, w in sol.z.get(a, [])), Fraction(0))
        if tot != 1:
            raise BalanceError(f"agent {a} configuration weights sum to {tot}")
        for S, _ in sol.z.get(a, []):
            if sum((g.weight(a, k) for k in S), Fraction(0)) < sol.target:
                raise BalanceError(f"agent {a} uses a configuration below the target")
    for k in range(len(g.edges)):
        u, v, _, _ = g.edges[k]
        mass = sol.item_mass(u, k) + (sol.item_mass(v, k) if v != u else 0)
        if mass > 1:
            raise BalanceError(f"item {k} is over-allocated ({mass})")


@dataclass(frozen=True)
class Classification:
    integral: Mapping[int, frozenset]
    fractional: frozenset
    residual: Mapping[int, Fraction]
    subgraph: WeightedGraph
    # vertex of the subgraph -> original vertex, and edge -> original edge
    vertex_map: tuple
    edge_map: tuple


def classify_items(g: WeightedGraph, sol: ConfigLPSolution) -> Classification:
    integral: dict[int, set] = {a: set() for a in range(g.n)}
    fractional = set()
    for k, (u, v, _, _) in enumerate(g.edges):
        # a self-loop can sit in every configuration of its agent at no cost
        owner = u if u == v else next((a for a in (u, v) if sol.item_mass(a, k) == 1), None)
        if owner is None:
            fractional.add(k)
        else:
            integral[owner].add(k)
    residual = {a: sol.target - sum((g.weight(a, k) for k in integral[a]), Fraction(0))
                for a in range(g.n)}
    ks = sorted(fractional)
    verts = sorted({x for k in ks for x in g.edges[k][:2]})
    idx = {v: j for j, v in enumerate(verts)}
    edges = []
    for k in ks:
        u, v, wu, wv = g.edges[k]
        edges.append((idx[u], idx[v], wu, wv))
    sub = WeightedGraph(len(verts), tuple(edges))
    for a in verts:
        mine = [k for k in ks if a in g.edges[k][:2]]
        top = max(mine, key=lambda k: (g.weight(a, k), -k))
        rest = sum((g.weight(a, k) for k in mine if k != top), Fraction(0))
        if rest < residual[a]:
            raise BalanceError(f"agent {a}: fractional utility without its best item is {rest} "
                               f"< residual target {residual[a]}")
    return Classification({a: frozenset(s) for a, s in integral.items()}, frozenset(fractional),
                          residual, sub, tuple(verts), tuple(ks))


def _candidates(g: WeightedGraph, epsilon: Fraction) -> list[Fraction]:
    inc = g.incident()
    cap = min((sum((g.weight(a, k) for k in inc[a]), Fraction(0)) for a in range(g.n)),
              default=Fraction(0))
    if cap <= 0:
        return []
    sums: set[Fraction] = set()
    for a in range(g.n):
        reach = {Fraction(0)}
        for k in inc[a]:
            w = g.weight(a, k)
            reach |= {s + w for s in reach if s + w <= cap}
            if len(reach) > SUBSET_SUM_LIMIT:
                break
        sums |= reach
        if len(sums) > SUBSET_SUM_LIMIT:
            break
    if len(sums) <= SUBSET_SUM_LIMIT:
        return sorted(s for s in sums if 0 < s <= cap)
    low = min(g.weight(a, k) for a in range(g.n) for k in inc[a] if g.weight(a, k) > 0)
    ratio = 1 + epsilon / 4
    out = []
    x = low
    while x < cap:
        out.append(x)
        x = Fraction(float(x * ratio)).limit_denominator(10**6)
    out.append(cap)
    return out


@dataclass(frozen=True)
class BalanceResult:
    value: Fraction
    allocation: Allocation
    M_lp: Fraction
    target: Fraction
    lp: ConfigLPSolution | None
    heads: tuple = field(default=())


def solve_balance_detailed(inst: Instance, epsilon) -> BalanceResult:
    """Binary search for the largest feasible LP target, then orient the fractional part."""
    eps = as_fraction(epsilon)
    if not (0 < eps < 1):
        raise BalanceError("epsilon must lie in (0, 1)")
    g = to_graph(inst)
    item_of = g.items
    # solving LP(M / (1 + eps/2)) makes M/2 / (1 + eps/2) = M / (2 + eps) exact
    lp_eps = eps / (2 + eps)
    cands = _candidates(g, eps)
    best = None
    lo, hi = 0, len(cands) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        try:
            sol = solve_config_lp(g, cands[mid], lp_eps)
        except ConfigLPInfeasible:
            hi = mid - 1
            continue
        best = (cands[mid], sol)
        lo = mid + 1
    if best is None:
        owner = {}
        for k, (u, v, _, _) in enumerate(g.edges):
            owner[item_of[k]] = u
        alloc = Allocation(owner)
        return BalanceResult(_value(inst, alloc), alloc, Fraction(0), Fraction(0), None)
    M, sol = best
    cls = classify_items(g, sol)
    owner = {}
    for a, ks in cls.integral.items():
        for k in ks:
            owner[item_of[k]] = a
    heads = orient(cls.subgraph)
    for j, k in enumerate(cls.edge_map):
        owner[item_of[k]] = cls.vertex_map[heads[j]]
    alloc = Allocation(owner)
    val = _value(inst, alloc)
    if val * 2 < sol.target:
        raise BalanceError(f"rounded value {val} is below half the LP target {sol.target}")
    return BalanceResult(val, alloc, M, sol.target, sol, tuple(heads))


def _value(inst: Instance, alloc: Allocation) -> Fraction:
    tot = [Fraction(0)] * inst.m
    for i, a in alloc.owner.items():
        tot[a] += inst.u(a, i)
    return min(tot)


def solve_balance(inst: Instance, epsilon) -> tuple[Fraction, Allocation]:
    res = solve_balance_detailed(inst, epsilon)
    return res.value, res.allocation
