"""Routing to terminals through tree decomposition, then per-level sampling of tuples and paths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..exact import ExactRecoveryError, exact_solve, rationalize
from ..layered_lp import SOURCE, TAU, FractionalSolution, LPError, LPModel, decompose_paths
from .bs import TreeDecomposition, bs_decompose, tree_assignment

__all__ = [
    "RoundingError",
    "RetryExhausted",
    "TerminalRouting",
    "RawPath",
    "RoundingResult",
    "exact_block",
    "route_to_terminals",
    "randomized_round",
    "congestion_bound",
    "to_network",
]


class RoundingError(RuntimeError):
    pass


class RetryExhausted(RoundingError):
    """Every seed up to the retry cap failed certification."""


def to_network(v):
    """Map a layered-graph vertex to its label in the flow network (None for s)."""
    if v == SOURCE:
        return None
    if v[0] in ("L", "H"):
        return ("A", v[3])
    if v[0] == "I":
        return ("I", v[3])
    if v[0] == "Hh":
        return ("A", v[1])
    return ("I", v[1])


def exact_block(model: LPModel, fsol: FractionalSolution) -> tuple[dict, dict]:
    """Exact rational terminal-block flow near the float one.

    Returns (edge -> flow, (hp, agent) -> x). The equality rows are
    re-solved on the float support and every row is checked exactly.
    """
    lg = model.lg
    edges = [e for e in model.block_edges if fsol.values.get(("t",) + e, 0.0) > 1e-12]
    copies = sorted({(e[0][1], e[0][3]) for e in edges if e[0][0] == "L"})
    nvar = len(edges) + len(copies)
    col = {e: k for k, e in enumerate(edges)}
    xcol = {c: len(edges) + k for k, c in enumerate(copies)}
    verts = sorted({v for e in edges for v in e if v[0] in ("Hh", "Ih")}, key=repr)
    rows, rhs = [], []
    for v in verts:
        row = [Fraction(0)] * nvar
        for e, k in col.items():
            if e[1] == v:
                row[k] += 1
            if e[0] == v:
                row[k] -= 1
        if v[0] == "Hh" and v[1] in lg.pa.T:
            rows.append(row)
            rhs.append(Fraction(1))
        else:
            rows.append(row)
            rhs.append(Fraction(0))
    for c in copies:
        row = [Fraction(0)] * nvar
        for e, k in col.items():
            if e[0] == ("L", c[0], c[0], c[1]):
                row[k] += 1
        row[xcol[c]] = Fraction(-1)
        rows.append(row)
        rhs.append(Fraction(0))
    guess = [rationalize(fsol.values[("t",) + e]) for e in edges]
    guess += [rationalize(fsol.x(hp, a)) for hp, a in copies]
    try:
        z = exact_solve(rows, rhs, guess)
    except ExactRecoveryError as exc:
        raise LPError(f"terminal flow has no exact point on its support: {exc}") from exc
    flow = {e: z[k] for e, k in col.items()}
    x = {c: z[xcol[c]] for c in copies}
    # every terminal must be covered even when it has no support edge
    for t in sorted(lg.pa.T):
        if not any(e[1] == ("Hh", t) for e in edges):
            raise LPError(f"terminal {t} receives no flow in the LP solution")
    inflow: dict = {}
    for e, f in flow.items():
        if f < 0:
            raise LPError(f"exact terminal flow is negative on {e}")
        inflow[e[1]] = inflow.get(e[1], 0) + f
    for v, f in inflow.items():
        if v[0] == "Ih" and f > 1:
            raise LPError(f"exact terminal flow exceeds capacity at {v}")
    return flow, x


@dataclass
class TerminalRouting:
    paths: list[tuple]  # network labels, light agent -> ... -> terminal
    selected: dict  # light agent -> chosen copy hp
    decomposition: TreeDecomposition
    x: dict  # merged light agent -> exact x
    y: dict


def route_to_terminals(model: LPModel, fsol: FractionalSolution, seed: int) -> TerminalRouting:
    """Part one of the rounding: one vertex-disjoint path into every terminal.

    All last-layer copies of a light agent feed the single copy of its heavy
    item, so they are merged into one agent for the decomposition; the
    chosen copy is drawn afterwards in proportion to its x.
    """
    lg = model.lg
    ci, pa = lg.ci, lg.pa
    flow, xc = exact_block(model, fsol)
    rng = np.random.default_rng(seed)
    xl: dict = {}
    for (hp, a), v in xc.items():
        xl[a] = xl.get(a, Fraction(0)) + v
    block_heavy = sorted(v[1] for v in lg.block_vertices() if v[0] == "Hh")
    block_items = sorted(v[1] for v in lg.block_vertices() if v[0] == "Ih")
    item_set = set(block_items)
    y: dict = {}
    for (u, v), f in flow.items():
        if u[0] == "Ih" and v[0] == "Hh" and f:
            y[(("A", v[1]), u[1])] = f
    for a in block_heavy:
        if a in pa.T:
            continue
        out = flow.get((("Hh", a), ("Ih", pa.P[a])), Fraction(0))
        if 1 - out:
            y[(("A", a), pa.P[a])] = 1 - out
    light = []
    for a in sorted(ci.light):
        h = pa.P.get(a)
        if h is None or h not in item_set:
            continue
        light.append(a)
        if 1 - xl.get(a, 0):
            y[(("A", a), h)] = 1 - xl.get(a, Fraction(0))
    agents = [("A", a) for a in block_heavy] + [("A", a) for a in light]
    x = {("A", a): xl.get(a, Fraction(0)) for a in light}
    dec = bs_decompose(agents, block_items, x, y)

    assigned: dict = {}  # agent -> item
    chosen = []
    for a, i in dec.matched.items():
        assigned[a] = i
    for tree in dec.trees:
        cands = sorted((a for a in tree.agents if x.get(a, 0) > 0), key=repr)
        weights = np.array([float(x[a]) for a in cands])
        pick = cands[int(rng.choice(len(cands), p=weights / weights.sum()))]
        chosen.append(pick[1])
        assigned.update(tree_assignment(tree, pick))
    selected: dict = {}
    for b in sorted(chosen):
        cps = sorted(hp for (hp, a) in xc if a == b and xc[(hp, a)] > 0)
        w = np.array([float(xc[(hp, b)]) for hp in cps])
        selected[b] = cps[int(rng.choice(len(cps), p=w / w.sum()))]

    holder = {i: a for a, i in assigned.items()}
    paths = []
    for b in sorted(chosen):
        path = [("A", b)]
        item = pa.P[b]
        seen = {("A", b)}
        while True:
            path.append(("I", item))
            nxt = holder.get(item)
            if nxt is None or nxt in seen or nxt[1] in ci.light:
                raise RoundingError(f"path from light agent {b} stops at item {item}")
            seen.add(nxt)
            path.append(nxt)
            if nxt[1] in pa.T:
                break
            item = pa.P[nxt[1]]
        paths.append(tuple(path))
    ends = sorted(p[-1][1] for p in paths)
    if ends != sorted(pa.T):
        raise RoundingError(f"terminal paths end at {ends}, expected every terminal once")
    return TerminalRouting(paths, selected, dec, xl, y)


@dataclass(frozen=True)
class RawPath:
    path: tuple  # network labels
    receiver: int
    sender: int | None  # light agent the path leaves, None when it starts at a free item
    hp: int
    tup: tuple


@dataclass
class RoundingResult:
    paths: list[RawPath]
    children: dict  # (hp, tuple) -> number of selected children
    congestion: int
    bound: float
    seed: int
    attempts: int
    selected_tuples: dict = field(default_factory=dict)


def congestion_bound(h: int, n: int) -> float:
    return 16 * h * h * max(1.0, math.log2(max(n, 2))) * (1 + 1 / h) ** h


def _congestion(paths: list[RawPath]) -> int:
    count: dict = {}
    for rp in paths:
        for v in rp.path[:-1]:
            count[v] = count.get(v, 0) + 1
    return max(count.values(), default=0)


def randomized_round(model: LPModel, selected: dict, fsol: FractionalSolution, seed: int,
                     retry_cap: int = 32, max_congestion: float | None = None) -> RoundingResult:
    """Part two: sample tuples level by level and one flow path per sampled tuple.

    ``selected`` maps each chosen light agent to its last-layer copy. At the
    first level every source path of a selected tuple is kept independently
    with probability flow / y. An attempt is accepted when every sampled
    tuple keeps at least N/2 children and no vertex starts or carries more
    than ``max_congestion`` paths; otherwise the next seed is tried.
    """
    lg = model.lg
    bound = congestion_bound(lg.h, lg.ci.n_items)
    cap = bound if max_congestion is None else min(bound, max_congestion)
    cache: dict = {}

    def paths_of(hp, lam):
        if (hp, lam) not in cache:
            cache[(hp, lam)] = decompose_paths(fsol, hp, lam)
        return cache[(hp, lam)]

    children_of: dict = {}
    for hp, levels in model.tuples.items():
        for j in range(hp, 0, -1):
            for lam in levels[j - 1]:
                children_of.setdefault((hp, lam[:-1]), []).append(lam)

    last_fail = ""
    for attempt in range(retry_cap):
        rng = np.random.default_rng(seed + attempt)
        out: list[RawPath] = []
        kids: dict = {}
        picked: dict = {}
        ok = True
        for b in sorted(selected):
            hp = selected[b]
            frontier = [(b,)]
            for j in range(hp, 0, -1):
                nxt = []
                for lam in frontier:
                    ylam = fsol.y(hp, lam)
                    a = lam[-1]
                    need = Fraction(lg.ci.light[a].N) / 2
                    got = 0
                    if ylam <= TAU:
                        ok = False
                        last_fail = f"tuple {lam} has weight {ylam}"
                        break
                    for child in children_of.get((hp, lam), []):
                        if child[-1] == SOURCE:
                            for p, f in paths_of(hp, child):
                                if rng.random() < min(1.0, f / ylam):
                                    got += 1
                                    out.append(_raw(p, hp, child))
                        else:
                            if rng.random() < min(1.0, fsol.y(hp, child) / ylam):
                                got += 1
                                nxt.append(child)
                                cand = paths_of(hp, child)
                                w = np.array([f for _, f in cand])
                                if not len(cand) or w.sum() <= 0:
                                    raise RoundingError(f"tuple {child} carries no flow paths")
                                p = cand[int(rng.choice(len(cand), p=w / w.sum()))][0]
                                out.append(_raw(p, hp, child))
                    kids[(hp, lam)] = got
                    picked[(hp, lam)] = True
                    if got < need:
                        ok = False
                        last_fail = f"tuple {lam} kept {got} children, below {need}"
                        break
                if not ok:
                    break
                frontier = nxt
            if not ok:
                break
        if not ok:
            continue
        cong = _congestion(out)
        if cong > cap:
            last_fail = f"congestion {cong} above {cap:.1f}"
            continue
        return RoundingResult(out, kids, cong, cap, seed + attempt, attempt + 1, picked)
    raise RetryExhausted(f"randomized rounding failed {retry_cap} seeds; last: {last_fail}")


def _raw(p: tuple, hp: int, lam: tuple) -> RawPath:
    labels = tuple(to_network(v) for v in p if v != SOURCE)
    sender = None if lam[-1] == SOURCE else lam[-1]
    return RawPath(labels, lam[-2], sender, hp, lam)
