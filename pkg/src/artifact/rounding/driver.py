"""Almost-feasible path pairs and the terminal-shrinking iteration on canonical instances."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from ..canonical import CanonicalInstance, scale_for_layers
from ..flownet import (
    SOURCE,
    FlowNetError,
    PrivateAssignment,
    assign_private_items,
    build_network,
    make_private,
)
from ..instance import Allocation
from ..layered_lp import Infeasible, build_layered_graph, build_lp, solve_lp
from .rescue import RescueResult, floor_div, merge_Q, multiplicity, rescue_flow
from .sampling import RoundingError, TerminalRouting, randomized_round, route_to_terminals
from .spider import RerouteResult, reroute

__all__ = [
    "ProgressError",
    "default_alpha",
    "AlmostFeasiblePaths",
    "almost_feasible",
    "check_almost_feasible",
    "augment_terminals",
    "IterationState",
    "CleanupReport",
    "cleanup_bad_agents",
    "SolveResult",
    "solve",
    "verify_canonical_allocation",
    "path_edges_valid",
]


class ProgressError(RoundingError):
    """An iteration failed to shrink the terminal set as required."""


def default_alpha(h: int, n: int) -> int:
    return 2 * h ** 4 * max(1, math.ceil(math.log2(max(n, 2))))


def path_edges_valid(net, path: Sequence) -> bool:
    return all(net.has_edge(u, v) for u, v in zip(path, path[1:]))


@dataclass
class AlmostFeasiblePaths:
    P1: list[tuple]
    P2: list[tuple]
    alpha: Fraction
    routing: TerminalRouting | None = None
    rescue: RescueResult | None = None
    congestion: int = 0
    attempts: int = 0
    lp_size: tuple = (0, 0)


def check_almost_feasible(ci: CanonicalInstance, pa: PrivateAssignment, P1: Sequence[Sequence],
                          P2: Sequence[Sequence], alpha) -> list[str]:
    """Exact check of the four properties; returns the violations.

    The incoming-path bound uses floor(N / alpha), which is what the
    disjoint rescue can deliver.
    """
    net = build_network(ci, pa)
    out = []
    seen: dict = {}
    ends: dict = {}
    for k, p in enumerate(P1):
        if not net.is_light(p[0]) or not net.is_terminal(p[-1]):
            out.append(f"P1 path {k} does not run from a light agent to a terminal")
        if not path_edges_valid(net, p):
            out.append(f"P1 path {k} uses a missing edge")
        for v in p:
            if v in seen:
                out.append(f"P1 paths {seen[v]} and {k} share {v}")
            seen[v] = k
        ends[p[-1]] = ends.get(p[-1], 0) + 1
    for t in sorted(pa.T):
        if ends.get(("A", t), 0) != 1:
            out.append(f"terminal {t} has {ends.get(('A', t), 0)} paths in P1")
    for v, c in multiplicity(P2).items():
        if c > 1:
            out.append(f"P2 uses {v} as first or intermediate vertex {c} times")
    for k, p in enumerate(P2):
        if not path_edges_valid(net, p):
            out.append(f"P2 path {k} uses a missing edge")
        if not net.is_light(p[-1]):
            out.append(f"P2 path {k} does not end at a light agent")
        if not (net.is_light(p[0]) or (p[0][0] == "I" and p[0][1] in pa.S)):
            out.append(f"P2 path {k} starts at {p[0]}")
        if any(net.is_light(v) for v in p[1:-1]):
            out.append(f"P2 path {k} passes through a light agent")
    incoming: dict = {}
    for p in P2:
        incoming[p[-1][1]] = incoming.get(p[-1][1], 0) + 1
    for name, fam in (("P1", P1), ("P2", P2)):
        starts: dict = {}
        for p in fam:
            if net.is_light(p[0]):
                starts[p[0][1]] = starts.get(p[0][1], 0) + 1
        for a, c in starts.items():
            if c > 1:
                out.append(f"light agent {a} starts {c} paths in {name}")
            need = floor_div(ci.light[a].N, alpha)
            if incoming.get(a, 0) < need:
                out.append(f"light agent {a} starts a path but receives {incoming.get(a, 0)} < {need}")
    return out


def almost_feasible(ci: CanonicalInstance, pa: PrivateAssignment, h: int, seed: int,
                    alpha=None, retry_cap: int = 32, on_model=None) -> AlmostFeasiblePaths | Infeasible:
    """Layered LP, terminal routing, randomized rounding and rescue with beta = alpha / 2."""
    alpha = Fraction(default_alpha(h, ci.n_items) if alpha is None else alpha)
    if not pa.T:
        return AlmostFeasiblePaths([], [], alpha)
    lg = build_layered_graph(ci, pa, h)
    model = build_lp(lg)
    if on_model is not None:
        on_model(model)
    sol = solve_lp(model)
    if isinstance(sol, Infeasible):
        return sol
    routing = route_to_terminals(model, sol, seed)
    beta = alpha / 2
    rr = randomized_round(model, routing.selected, sol, seed, retry_cap, max_congestion=float(beta))
    receivers = {rp.receiver for rp in rr.paths} | set(routing.selected)
    res = rescue_flow(ci, pa.P, [rp.path for rp in rr.paths], receivers, beta)
    out = AlmostFeasiblePaths(routing.paths, res.paths, alpha, routing, res, rr.congestion, rr.attempts,
                              (len(model.rows), len(model.columns)))
    bad = check_almost_feasible(ci, pa, out.P1, out.P2, alpha)
    if bad:
        raise RoundingError("almost-feasible output breaks its guarantees: " + "; ".join(bad[:5]))
    return out


def augment_terminals(ci: CanonicalInstance, pa: PrivateAssignment,
                      blocked: set | frozenset = frozenset()) -> tuple[PrivateAssignment, int]:
    """Shift private items along light-free paths from s to terminals until none is left.

    Vertices in ``blocked`` (those on carried paths) are avoided so the
    carried paths keep their edges.
    """
    count = 0
    while True:
        net = build_network(ci, pa)
        prev = {SOURCE: None}
        queue = deque([SOURCE])
        hit = None
        while queue and hit is None:
            u = queue.popleft()
            for v in sorted(net.succ.get(u, ()), key=repr):
                if v in prev or v in blocked or net.is_light(v):
                    continue
                prev[v] = u
                if net.is_terminal(v):
                    hit = v
                    break
                queue.append(v)
        if hit is None:
            return pa, count
        P = dict(pa.P)
        v = hit
        while v != SOURCE:
            item = prev[v]
            P[v[1]] = item[1]
            v = prev[item]
        pa = make_private(ci, P)
        count += 1


@dataclass
class IterationState:
    j: int
    L: frozenset
    T: frozenset
    P: dict
    Q: list

    def alpha_j(self, alpha) -> Fraction:
        return 2 * self.j * Fraction(alpha)


@dataclass
class CleanupReport:
    bad: list
    new_terminals: list
    responsible_for: dict  # bad agent -> removed path descriptors
    graph: list  # (bad agent, responsible party) edges


def cleanup_bad_agents(ci: CanonicalInstance, state: IterationState, P1: Sequence[Sequence],
                       Q2: dict, alpha, alpha_j, removed: dict | None = None) -> tuple[IterationState, CleanupReport]:
    """Remove bad light agents one at a time (lowest id first) and build the next state.

    ``Q2`` maps indices of the merged family to surviving paths; ``removed``
    maps indices already dropped by rerouting to the responsible terminal.
    """
    alpha, alpha_j = Fraction(alpha), Fraction(alpha_j)
    limit = alpha_j + 2 * alpha
    L = set(state.L)
    P = dict(state.P)
    P1 = {k: tuple(p) for k, p in enumerate(P1)}
    Q = dict(Q2)
    who: dict = {k: ("terminal", t) for k, t in (removed or {}).items()}
    new_T: list = []
    bad_seen: list = []
    responsible: dict = {}

    def incoming(a):
        return sum(1 for q in Q.values() if q[-1] == ("A", a))

    while True:
        origins = {p[0][1] for p in list(P1.values()) + list(Q.values()) if p[0][0] == "A" and p[0][1] in ci.light}
        cands = sorted((origins | L) & set(ci.light))
        bad = [a for a in cands if incoming(a) < Fraction(ci.light[a].N) / limit]
        if not bad:
            break
        a = bad[0]
        bad_seen.append(a)
        for k in sorted(k for k, q in Q.items() if q[-1] == ("A", a)):
            who[k] = ("self", a)
            del Q[k]
        if a not in L:
            pk = next((k for k, p in P1.items() if p[0] == ("A", a)), None)
            if pk is not None:
                t = P1.pop(pk)[-1][1]
                new_T.append(t)
                responsible.setdefault(a, []).append(("P1", pk, t))
            else:
                qk = next(k for k, q in Q.items() if q[0] == ("A", a))
                del Q[qk]
                who[qk] = ("agent", a)
                responsible.setdefault(a, []).append(("Q", qk))
        else:
            i = ci.light[a].heavy_item
            holder = next((b for b, it in P.items() if it == i), None)
            if holder is not None:
                del P[holder]
                new_T.append(holder)
            P[a] = i
            L.discard(a)
            for pk in sorted(k for k, p in P1.items() if ("I", i) in p):
                t = P1.pop(pk)[-1][1]
                new_T.append(t)
                responsible.setdefault(a, []).append(("P1", pk, t))
            for qk in sorted(k for k, q in Q.items() if ("I", i) in q):
                del Q[qk]
                who[qk] = ("agent", a)
                responsible.setdefault(a, []).append(("Q", qk))
    # next input: origins of terminal paths become satisfied, privates follow the paths
    for p in P1.values():
        a = p[0][1]
        L.add(a)
        P.pop(a, None)
        for u, v in zip(p, p[1:]):
            if u[0] == "I" and v[0] == "A":
                P[v[1]] = u[1]
    graph = []
    for k, (kind, party) in sorted(who.items()):
        if kind == "self":
            continue
        # edge from the bad agent that lost path k to whoever removed it
        graph.append((k, party))
    nxt = IterationState(state.j + 1, frozenset(L), frozenset(new_T), P, [Q[k] for k in sorted(Q)])
    expect_T = frozenset(a for a in ci.heavy if a not in P)
    if expect_T != nxt.T:
        raise RoundingError(f"terminal bookkeeping drifted: {sorted(expect_T ^ nxt.T)}")
    return nxt, CleanupReport(bad_seen, sorted(new_T), responsible, graph)


@dataclass
class SolveResult:
    allocation: Allocation | None
    certificate: Infeasible | None
    trace: list = field(default_factory=list)
    alpha: Fraction = Fraction(0)
    alpha_final: Fraction = Fraction(0)
    h: int = 0
    scaled: CanonicalInstance | None = None
    state: IterationState | None = None

    @property
    def feasible(self) -> bool:
        return self.allocation is not None


def verify_canonical_allocation(ci: CanonicalInstance, alloc: Allocation, alpha_final) -> list[str]:
    """Exact check: heavy agents hold an item of value M, light agents their heavy item or N/alpha light items."""
    out = []
    held: dict = {}
    for i, a in alloc.owner.items():
        if not (0 <= i < ci.n_items):
            out.append(f"item {i} does not exist")
        held.setdefault(a, set()).add(i)
    for a, gamma in ci.heavy.items():
        if not (held.get(a, set()) & gamma):
            out.append(f"heavy agent {a} holds no admissible item")
    for a, spec in ci.light.items():
        mine = held.get(a, set())
        if spec.heavy_item in mine:
            continue
        got = len(mine & spec.light_items)
        if got < spec.N / Fraction(alpha_final) or got == 0:
            out.append(f"light agent {a} holds {got} light items, below N/alpha = {spec.N / Fraction(alpha_final)}")
    return out


def _final_allocation(ci: CanonicalInstance, state: IterationState) -> Allocation:
    owner = {i: a for a, i in state.P.items()}
    for q in state.Q:
        for u, v in zip(q, q[1:]):
            if u[0] == "I" and v[0] == "A":
                owner[u[1]] = v[1]
    return Allocation(owner)


def solve(ci: CanonicalInstance, epsilon=None, seed: int = 0, h: int | None = None, alpha=None,
          retry_cap: int = 32, on_trace: Callable[[dict], None] | None = None,
          start: IterationState | None = None, prescaled: bool = False,
          on_model: Callable | None = None) -> SolveResult:
    """Run the terminal-shrinking iterations on a canonical instance.

    Thresholds are first divided by (h + 1). Each iteration drops the
    satisfied light agents, solves the layered LP, rounds it, merges the
    carried paths, reroutes and cleans up. An infeasible LP ends the run with
    its certificate, meaning the guessed M is above the optimum.

    ``start`` resumes from a given state instead of iteration 1; with
    ``prescaled`` the thresholds of ``ci`` are taken as already divided.
    ``on_model(j, model)`` sees every LP before it is solved.
    """
    eps = Fraction(ci.epsilon if epsilon is None else epsilon)
    if h is None:
        h = math.ceil(8 / eps)
    sci = ci if prescaled else scale_for_layers(ci, h)
    alpha = Fraction(default_alpha(h, ci.n_items) if alpha is None else alpha)
    if start is None:
        pa = assign_private_items(sci)
        state = IterationState(1, frozenset(), pa.T, dict(pa.P), [])
    else:
        state = start
        expect_T = frozenset(a for a in sci.heavy if a not in state.P)
        if expect_T != state.T:
            raise RoundingError("start state has a terminal set that does not match its private items")
    trace: list = []
    light = set(sci.light)
    n_eps = float(sci.threshold_n) ** float(eps)

    def emit(rec):
        trace.append(rec)
        if on_trace is not None:
            on_trace(rec)

    while state.j <= h:
        if not state.T:
            break
        j = state.j
        alpha_j = state.alpha_j(alpha)
        sub = sci.restrict(a for a in sci.agents if a not in state.L)
        pa_j = make_private(sub, {a: i for a, i in state.P.items() if a in set(sub.agents)})
        pa_j, augmented = augment_terminals(sub, pa_j, {v for q in state.Q for v in q})
        if augmented:
            state = IterationState(j, state.L, pa_j.T, {**state.P, **pa_j.P}, state.Q)
            if not state.T:
                emit({"iteration": j, "terminals": 0, "augmented": augmented, "lp": "skipped"})
                break
        hook = None if on_model is None else (lambda model, j=j: on_model(j, model))
        af = almost_feasible(sub, pa_j, h, seed + 7919 * j, alpha, retry_cap, hook)
        if isinstance(af, Infeasible):
            emit({"iteration": j, "terminals": len(state.T), "satisfied": len(state.L), "lp": "infeasible",
                  "violation": af.violation, "certified": af.verified})
            return SolveResult(None, af, trace, alpha, alpha_j, h, sci, state)
        origins_new = {p[0][1] for p in af.P1} | {p[0][1] for p in af.P2 if p[0][0] == "A"}
        origins_old = set(state.L) | {q[0][1] for q in state.Q if q[0][0] == "A"}
        merged = merge_Q(sci, state.P, af.P2, state.Q, origins_new | origins_old, state.L, alpha, alpha_j)
        rr: RerouteResult = reroute(af.P1, merged.paths, light)
        q2 = {k: merged.paths[k] for k in rr.kept}
        nxt, rep = cleanup_bad_agents(sci, state, rr.P1, q2, alpha, alpha_j, rr.removed)
        rec = {
            "iteration": j, "terminals": len(state.T), "satisfied": len(state.L), "lp": "feasible",
            "lp_rows": af.lp_size[0], "lp_cols": af.lp_size[1], "congestion": af.congestion,
            "attempts": af.attempts, "zero_quota": len(merged.zero_quota), "bad": len(rep.bad),
            "next_terminals": len(nxt.T), "augmented": augmented,
        }
        emit(rec)
        meaningful = n_eps >= 16 * h * h * float(alpha)
        if meaningful and len(nxt.T) > 32 * h * h * float(alpha) / n_eps * len(state.T):
            raise ProgressError(f"iteration {j}: {len(nxt.T)} terminals left, above the shrink bound")
        if not meaningful and len(nxt.T) >= len(state.T):
            raise ProgressError(f"iteration {j}: terminal count did not drop ({len(state.T)} -> {len(nxt.T)})")
        state = nxt
    if state.T:
        raise ProgressError(f"{len(state.T)} terminals remain after {h} iterations")
    alloc = _final_allocation(sci, state)
    alpha_final = state.alpha_j(alpha)
    bad = verify_canonical_allocation(sci, alloc, alpha_final)
    if bad:
        raise RoundingError("final allocation fails verification: " + "; ".join(bad[:5]))
    return SolveResult(alloc, None, trace, alpha, alpha_final, h, sci, state)
