"""Layered flow graph and its feasibility LP in compact per-commodity form.

The graph holds ``h`` subgraphs; subgraph ``hp`` has ``hp`` levels of light
agent copies, and a shared terminal block routes flow from the last layer
of each subgraph to the terminals. Vertex labels:

* ``"s"``                   the source
* ``("L", hp, j, A)``       copy of light agent A in layer j of subgraph hp
* ``("H", hp, j, A)``       copy of heavy agent A inside level j
* ``("I", hp, j, i)``       copy of item i inside level j
* ``("Hh", A)``, ``("Ih", i)``  terminal block copies

A tuple ``lam`` is ``(l_hp, ..., l_j)`` of light agent ids, optionally
closed by ``"s"``; the position of an entry fixes its layer.
"""
from __future__ import annotations

import os
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .canonical import CanonicalInstance
from .flownet import PrivateAssignment, build_network
from .oracles import GuardExceeded

__all__ = [
    "LPError",
    "LPGuardExceeded",
    "LayeredGraph",
    "build_layered_graph",
    "LPModel",
    "build_lp",
    "FractionalSolution",
    "Infeasible",
    "solve_lp",
    "decompose_paths",
    "assignment_from_forest",
    "TAU",
    "DEFAULT_GUARD",
]

TAU = 1e-9
DEFAULT_GUARD = 2 * 10**6
SOURCE = "s"


class LPError(RuntimeError):
    """Numerical failure of the LP solver (distinct from infeasibility)."""


class LPGuardExceeded(GuardExceeded):
    pass


def _guard() -> int:
    raw = os.environ.get("MAXMIN_GUARD_NONZEROS")
    return int(raw) if raw else DEFAULT_GUARD


@dataclass
class LayeredGraph:
    ci: CanonicalInstance
    pa: PrivateAssignment
    h: int
    h_star: frozenset
    i_star: frozenset
    succ: dict = field(default_factory=dict)
    pred: dict = field(default_factory=dict)

    @property
    def light(self) -> list[int]:
        return sorted(self.ci.light)

    def add_edge(self, u, v) -> None:
        self.succ.setdefault(u, set()).add(v)
        self.pred.setdefault(v, set()).add(u)
        self.succ.setdefault(v, set())
        self.pred.setdefault(u, set())

    def vertices(self):
        return self.succ.keys()

    def level_vertices(self, hp: int, j: int) -> set:
        return {v for v in self.succ if isinstance(v, tuple) and v[0] in ("H", "I")
                and v[1] == hp and v[2] == j}

    def block_vertices(self) -> set:
        return {v for v in self.succ if isinstance(v, tuple) and v[0] in ("Hh", "Ih")}

    def copies_per_vertex(self) -> int:
        count: dict = {}
        for v in self.succ:
            if v == SOURCE:
                continue
            key = ("agent" if v[0] in ("L", "H", "Hh") else "item", v[-1])
            count[key] = count.get(key, 0) + 1
        return max(count.values(), default=0)


def build_layered_graph(ci: CanonicalInstance, pa: PrivateAssignment, h: int) -> LayeredGraph:
    if h < 1:
        raise LPError("h must be at least 1")
    net = build_network(ci, pa)
    h_star, i_star = net.reach_without_light()
    if h_star & pa.T:
        raise LPError(f"terminals {sorted(h_star & pa.T)} are reachable from s without light agents; "
                      "augment the private assignment first")
    lg = LayeredGraph(ci, pa, h, frozenset(h_star), frozenset(i_star))
    non_s = [i for i in range(ci.n_items) if i not in pa.S]
    priv_owner = pa.owner_of()
    for hp in range(1, h + 1):
        for j in range(1, hp + 1):
            for a in lg.light:
                lg.succ.setdefault(("L", hp, j, a), set())
                lg.pred.setdefault(("L", hp, j, a), set())
        # level 1: source, I* and H*
        for i in sorted(pa.S):
            lg.add_edge(SOURCE, ("I", hp, 1, i))
        for a in sorted(h_star):
            lg.add_edge(("H", hp, 1, a), ("I", hp, 1, pa.P[a]))
            for i in ci.heavy[a]:
                if i != pa.P[a] and i in i_star:
                    lg.add_edge(("I", hp, 1, i), ("H", hp, 1, a))
        for a, spec in ci.light.items():
            for i in spec.light_items:
                if i in i_star:
                    lg.add_edge(("I", hp, 1, i), ("L", hp, 1, a))
        # levels 2..hp: non-terminal heavy agents and non-free items
        for j in range(2, hp + 1):
            for i in non_s:
                owner = priv_owner[i]
                if owner in ci.light:
                    lg.add_edge(("L", hp, j - 1, owner), ("I", hp, j, i))
                else:
                    lg.add_edge(("H", hp, j, owner), ("I", hp, j, i))
            for a in sorted(ci.heavy):
                if a in pa.T:
                    continue
                for i in ci.heavy[a]:
                    if i != pa.P[a] and i not in pa.S:
                        lg.add_edge(("I", hp, j, i), ("H", hp, j, a))
            for a, spec in ci.light.items():
                for i in spec.light_items:
                    if i not in pa.S:
                        lg.add_edge(("I", hp, j, i), ("L", hp, j, a))
    # terminal block; copies reachable from s directly cannot reach a terminal
    block_items = [i for i in non_s if i not in i_star]
    block_heavy = [a for a in sorted(ci.heavy) if a not in h_star]
    for a in block_heavy:
        lg.succ.setdefault(("Hh", a), set())
        lg.pred.setdefault(("Hh", a), set())
    for i in block_items:
        owner = priv_owner[i]
        if owner in ci.light:
            for hp in range(1, h + 1):
                lg.add_edge(("L", hp, hp, owner), ("Ih", i))
        elif owner not in h_star:
            lg.add_edge(("Hh", owner), ("Ih", i))
    for a in block_heavy:
        for i in ci.heavy[a]:
            if i != pa.P.get(a) and i in block_items:
                lg.add_edge(("Ih", i), ("Hh", a))
    return lg


def _reach(lg: LayeredGraph, start, allowed: set, forward: bool) -> set:
    nbrs = lg.succ if forward else lg.pred
    seen = set()
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in nbrs.get(u, ()):
            if v in allowed and v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


@dataclass
class _Row:
    name: str
    family: str
    coeffs: dict
    sense: str  # "=" or "<="
    rhs: Fraction


@dataclass
class LPModel:
    """Variables are hashable keys; rows carry exact coefficients."""

    lg: LayeredGraph
    columns: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    # tuples per subgraph and depth: tuples[hp][j] lists S_j
    tuples: dict = field(default_factory=dict)
    # commodity (hp, lam) -> (src, dst, level j, allowed edge list)
    commodities: dict = field(default_factory=dict)
    block_edges: list = field(default_factory=list)

    def col(self, key) -> int:
        k = self.index.get(key)
        if k is None:
            k = len(self.columns)
            self.index[key] = k
            self.columns.append(key)
        return k

    def add_row(self, name, family, coeffs, sense, rhs) -> None:
        self.rows.append(_Row(name, family, coeffs, sense, Fraction(rhs)))

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.family] = out.get(r.family, 0) + 1
        return out

    def nonzeros(self) -> int:
        return sum(len(r.coeffs) for r in self.rows)

    def violations(self, values: dict, tol=0) -> list[str]:
        """Rows violated by ``values`` (key -> number); exact when given Fractions."""
        out = []
        for r in self.rows:
            lhs = sum((values.get(self.columns[k], 0) * c for k, c in r.coeffs.items()), 0)
            bad = abs(lhs - r.rhs) > tol if r.sense == "=" else lhs - r.rhs > tol
            if bad:
                out.append(f"{r.name}: {lhs} {r.sense} {r.rhs}")
        for k, key in enumerate(self.columns):
            if values.get(key, 0) < -tol:
                out.append(f"column {key} negative")
        return out

    def to_lp_text(self) -> str:
        """The model in CPLEX LP text format with objective 0."""
        names = [_safe(f"v{k}_{_key_text(key)}") for k, key in enumerate(self.columns)]
        out = ["\\ max-min allocation layered feasibility model", "Minimize", " obj: 0 " + (names[0] if names else "")]
        out.append("Subject To")
        for r in self.rows:
            terms = []
            for k, c in sorted(r.coeffs.items()):
                cf = float(c)
                terms.append(f"{'+' if cf >= 0 else '-'} {abs(cf):.17g} {names[k]}")
            op = "=" if r.sense == "=" else "<="
            out.append(f" {_safe(r.name)}: {' '.join(terms) or '0 ' + names[0]} {op} {float(r.rhs):.17g}")
        out.append("Bounds")
        for nm in names:
            out.append(f" {nm} >= 0")
        out.append("End")
        return "\n".join(out) + "\n"


def _key_text(key) -> str:
    return "_".join(str(x) for x in (key if isinstance(key, tuple) else (key,)))


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name)[:250]


def _lab(v) -> str:
    return v if isinstance(v, str) else "_".join(str(x) for x in v)


def build_lp(lg: LayeredGraph, guard: int | None = None) -> LPModel:
    """Assemble every row family of the layered LP.

    Families: ``term`` (terminal in-flow), ``flow`` (conservation), ``xa``
    (light agent out-flow equals x), ``cap`` (unit item capacity), ``yprop``
    (a tuple's last agent receives N times its weight), ``pcap`` (prefix
    capacity over tuples), ``lcap`` (light copy capacity), ``route``
    (commodity value) and ``mlcap`` (per-prefix item capacity, including
    the level where the prefix's own commodities are routed).
    """
    guard = _guard() if guard is None else guard
    ci, pa, h = lg.ci, lg.pa, lg.h
    model = LPModel(lg)
    light = lg.light

    # ---- reachability inside every level, used to prune tuples and edges
    level_sets = {(hp, j): lg.level_vertices(hp, j) for hp in range(1, h + 1) for j in range(1, hp + 1)}
    fwd: dict = {}
    bwd: dict = {}
    for (hp, j), inner in level_sets.items():
        srcs = [SOURCE] if j == 1 else [("L", hp, j - 1, b) for b in light]
        dsts = [("L", hp, j, a) for a in light]
        for s_ in srcs:
            fwd[(hp, j, s_)] = _reach(lg, s_, inner | set(dsts), True)
        for d in dsts:
            bwd[(hp, j, d)] = _reach(lg, d, inner | set(srcs), False)

    # ---- tuples S_j for every subgraph
    for hp in range(1, h + 1):
        levels = {hp: [(a,) for a in light]}
        for j in range(hp, 0, -1):
            nxt = []
            for lam in levels[j]:
                a = lam[-1]
                dst = ("L", hp, j, a)
                if j == 1:
                    if dst in fwd[(hp, 1, SOURCE)]:
                        nxt.append(lam + (SOURCE,))
                else:
                    for b in light:
                        if dst in fwd[(hp, j, ("L", hp, j - 1, b))]:
                            nxt.append(lam + (b,))
            levels[j - 1] = nxt
        model.tuples[hp] = levels
    est = sum(len(v) for lv in model.tuples.values() for v in lv.values())
    est_edges = sum(len(lg.succ[v]) for v in lg.succ)
    if est * max(1, est_edges) // max(1, len(light)) > guard * 50:
        raise LPGuardExceeded(
            f"about {est} tuples over {est_edges} edges exceed the LP guard {guard}; reduce h or the instance")

    def y(hp, lam):
        return model.col(("y", hp, lam))

    # ---- part 1: terminal block
    block = lg.block_vertices()
    for u in list(lg.succ):
        for v in lg.succ[u]:
            if v in block and (u in block or u[0] == "L"):
                model.block_edges.append((u, v))
    model.block_edges.sort(key=lambda e: (_lab(e[0]), _lab(e[1])))
    tf = {e: model.col(("t",) + e) for e in model.block_edges}
    ins: dict = {}
    outs: dict = {}
    for (u, v), k in tf.items():
        outs.setdefault(u, {})[k] = 1
        ins.setdefault(v, {})[k] = 1
    for v in sorted(block, key=_lab):
        if v[0] == "Hh" and v[1] in pa.T:
            model.add_row(f"term_t{v[1]}", "term", dict(ins.get(v, {})), "=", 1)
        else:
            row = dict(ins.get(v, {}))
            for k in outs.get(v, {}):
                row[k] = row.get(k, 0) - 1
            model.add_row(f"flow_{_lab(v)}", "flow", row, "=", 0)
        if v[0] == "Ih":
            model.add_row(f"cap_{_lab(v)}", "cap", dict(ins.get(v, {})), "<=", 1)
    for hp in range(1, h + 1):
        for a in light:
            v = ("L", hp, hp, a)
            row = dict(outs.get(v, {}))
            row[y(hp, (a,))] = row.get(y(hp, (a,)), 0) - 1
            model.add_row(f"xa_{hp}_{a}", "xa", row, "=", 0)

    # ---- part 2: tuple weights
    for hp in range(1, h + 1):
        levels = model.tuples[hp]
        children: dict = {}
        for j in range(hp, 0, -1):
            for lam in levels[j - 1]:
                children.setdefault(lam[:-1], []).append(lam)
        for j in range(hp, 0, -1):
            for lam in levels[j]:
                row = {y(hp, c): 1 for c in children.get(lam, [])}
                row[y(hp, lam)] = row.get(y(hp, lam), 0) - ci.light[lam[-1]].N
                model.add_row(f"yprop_{hp}_{_key_text(lam)}", "yprop", row, "=", 0)
        # prefix capacity: k < j, tuples of S_k with prefix lam and last agent a
        for j in range(hp, 1, -1):
            for k in range(j - 1, 0, -1):
                groups: dict = {}
                for lam2 in levels[k]:
                    pre = lam2[:hp - j + 1]
                    groups.setdefault((pre, lam2[-1]), []).append(lam2)
                for (pre, a), members in sorted(groups.items(), key=lambda t: _key_text(t[0])):
                    if pre not in set(levels[j]):
                        continue
                    row = {y(hp, m): 1 for m in members}
                    row[y(hp, pre)] = row.get(y(hp, pre), 0) - 1
                    model.add_row(f"pcap_{hp}_{_key_text(pre)}_L{k}_{a}", "pcap", row, "<=", 0)
        for j in range(1, hp + 1):
            by_last: dict = {}
            for lam in levels[j]:
                by_last.setdefault(lam[-1], []).append(lam)
            for a, members in sorted(by_last.items()):
                model.add_row(f"lcap_{hp}_{j}_{a}", "lcap", {y(hp, m): 1 for m in members}, "<=", 1)

    # ---- part 3: routing inside levels
    through: dict = {}  # item copy -> {commodity: {col: 1}}
    for hp in range(1, h + 1):
        levels = model.tuples[hp]
        for j in range(1, hp + 1):
            inner = level_sets[(hp, j)]
            for lam in levels[j - 1]:
                src = SOURCE if j == 1 else ("L", hp, j - 1, lam[-1])
                dst = ("L", hp, j, lam[-2])
                alive = (fwd[(hp, j, src)] & bwd[(hp, j, dst)]) & inner
                edges = []
                for u in [src] + sorted(alive, key=_lab):
                    for v in lg.succ[u]:
                        if v in alive or v == dst:
                            edges.append((u, v))
                model.commodities[(hp, lam)] = (src, dst, j, edges)
                cols = {e: model.col(("f", hp, lam) + e) for e in edges}
                fin: dict = {}
                fout: dict = {}
                for (u, v), k in cols.items():
                    fout.setdefault(u, {})[k] = 1
                    fin.setdefault(v, {})[k] = 1
                yk = y(hp, lam)
                row = dict(fout.get(src, {}))
                row[yk] = -1
                model.add_row(f"route_{hp}_{_key_text(lam)}", "route", row, "=", 0)
                for v in sorted(alive, key=_lab):
                    row = dict(fin.get(v, {}))
                    for k in fout.get(v, {}):
                        row[k] = row.get(k, 0) - 1
                    model.add_row(f"flow_{hp}_{_key_text(lam)}_{_lab(v)}", "flow", row, "=", 0)
                    if v[0] == "I":
                        through.setdefault(v, {})[(hp, lam)] = fin.get(v, {})
                row = dict(fin.get(dst, {}))
                row[yk] = -1
                model.add_row(f"sink_{hp}_{_key_text(lam)}", "flow", row, "=", 0)
        if model.nonzeros() > guard:
            raise LPGuardExceeded(f"LP has more than {guard} nonzeros; reduce h or the instance")
    for v in sorted(through, key=_lab):
        row: dict = {}
        for cmap in through[v].values():
            for k in cmap:
                row[k] = row.get(k, 0) + 1
        model.add_row(f"cap_{_lab(v)}", "cap", row, "<=", 1)
    # per-prefix item capacity: lam in S_j, items of level k <= j
    for v in sorted(through, key=_lab):
        hp, k = v[1], v[2]
        per_prefix: dict = {}
        for (_, lam2), cmap in through[v].items():
            # lam2 is in S_{k-1}; its prefixes in S_j for j >= k
            for j in range(k, hp + 1):
                pre = lam2[:hp - j + 1]
                d = per_prefix.setdefault(pre, {})
                for c in cmap:
                    d[c] = d.get(c, 0) + 1
        for pre, row in sorted(per_prefix.items(), key=lambda t: _key_text(t[0])):
            row = dict(row)
            yk = y(hp, pre)
            row[yk] = row.get(yk, 0) - 1
            model.add_row(f"mlcap_{hp}_{_key_text(pre)}_{_lab(v)}", "mlcap", row, "<=", 0)
    if model.nonzeros() > guard:
        raise LPGuardExceeded(f"LP has {model.nonzeros()} nonzeros, above the guard {guard}")
    return model


@dataclass
class FractionalSolution:
    model: LPModel
    values: dict
    max_violation: float

    def x(self, hp: int, a: int) -> float:
        return self.values.get(("y", hp, (a,)), 0.0)

    def y(self, hp: int, lam: tuple) -> float:
        return self.values.get(("y", hp, lam), 0.0)

    def block_flow(self) -> dict:
        return {e: self.values.get(("t",) + e, 0.0) for e in self.model.block_edges}

    def commodity_flow(self, hp: int, lam: tuple) -> dict:
        _, _, _, edges = self.model.commodities[(hp, lam)]
        return {e: self.values.get(("f", hp, lam) + e, 0.0) for e in edges}


@dataclass
class Infeasible:
    """LP infeasibility with a Farkas-style dual ray.

    ``ray`` maps row names to multipliers ``u``; for every column the
    combination ``sum u_r a_rj`` is <= ``tol`` while ``sum u_r b_r`` equals
    ``violation`` > 0, and inequality multipliers are <= 0.
    """

    status: str
    violation: float
    ray: dict
    verified: bool


def solve_lp(model: LPModel, tol: float = TAU) -> FractionalSolution | Infeasible:
    """Solve the elastic form: minimize total row violation.

    A zero optimum gives a feasible point; a positive optimum comes with
    dual multipliers that certify infeasibility.
    """
    n = len(model.columns)
    eq = [r for r in model.rows if r.sense == "="]
    ub = [r for r in model.rows if r.sense == "<="]
    ne, nu = len(eq), len(ub)
    total = n + 2 * ne + nu
    c = np.zeros(total)
    c[n:] = 1.0

    def mat(rows, extra):
        data, ri, ci_ = [], [], []
        for r_i, r in enumerate(rows):
            for k, v in r.coeffs.items():
                if v != 0:
                    data.append(float(v))
                    ri.append(r_i)
                    ci_.append(k)
        for r_i, (col, val) in enumerate(extra):
            for cc, vv in zip(col, val):
                data.append(vv)
                ri.append(r_i)
                ci_.append(cc)
        return sp.csr_matrix((data, (ri, ci_)), shape=(len(rows), total))

    A_eq = mat(eq, [((n + 2 * r, n + 2 * r + 1), (1.0, -1.0)) for r in range(ne)]) if ne else None
    A_ub = mat(ub, [((n + 2 * ne + r,), (-1.0,)) for r in range(nu)]) if nu else None
    b_eq = np.array([float(r.rhs) for r in eq]) if ne else None
    b_ub = np.array([float(r.rhs) for r in ub]) if nu else None
    if total == 0:
        return FractionalSolution(model, {}, 0.0)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise LPError(f"LP solver failed with status {res.status}: {res.message}")
    if res.fun <= max(tol * 100, 1e-7):
        values = {key: max(0.0, float(res.x[k])) for k, key in enumerate(model.columns)}
        viol = _max_violation(model, values)
        return FractionalSolution(model, values, viol)
    pi = res.eqlin.marginals if ne else np.zeros(0)
    mu = res.ineqlin.marginals if nu else np.zeros(0)
    ray = {r.name: float(v) for r, v in zip(eq, pi)}
    ray.update({r.name: float(v) for r, v in zip(ub, mu)})
    verified = _check_ray(model, eq, ub, pi, mu, n, res.fun)
    return Infeasible("infeasible", float(res.fun), ray, verified)


def _max_violation(model: LPModel, values: dict) -> float:
    worst = 0.0
    for r in model.rows:
        lhs = sum(values.get(model.columns[k], 0.0) * float(c) for k, c in r.coeffs.items())
        gap = abs(lhs - float(r.rhs)) if r.sense == "=" else lhs - float(r.rhs)
        worst = max(worst, gap)
    return worst


def _check_ray(model, eq, ub, pi, mu, n, value) -> bool:
    combo = np.zeros(n)
    for r, u in zip(eq, pi):
        for k, v in r.coeffs.items():
            combo[k] += u * float(v)
    for r, u in zip(ub, mu):
        for k, v in r.coeffs.items():
            combo[k] += u * float(v)
    rhs = sum(u * float(r.rhs) for r, u in zip(eq, pi)) + sum(u * float(r.rhs) for r, u in zip(ub, mu))
    signs_ok = all(u <= 1e-9 for u in mu)
    return bool(signs_ok and combo.max(initial=0.0) <= 1e-7 and rhs > 1e-7 and abs(rhs - value) < 1e-6)


def decompose_paths(sol: FractionalSolution, hp: int, lam: tuple, tol: float = TAU) -> list[tuple[tuple, float]]:
    """Split one commodity's edge flow into (path, weight) pairs from its source to its sink.

    Flow cycles are cancelled first, so every returned path is simple.
    """
    src, dst, _, _ = sol.model.commodities[(hp, lam)]
    flow = {e: v for e, v in sol.commodity_flow(hp, lam).items() if v > tol}
    return _decompose(flow, src, dst, tol)


def _decompose(flow: dict, src, dst, tol: float) -> list[tuple[tuple, float]]:
    out_edges: dict = {}
    for (u, v) in sorted(flow, key=lambda e: (_lab(e[0]), _lab(e[1]))):
        out_edges.setdefault(u, []).append(v)
    paths = []
    for _ in range(10 * len(flow) + 10):
        # walk along positive edges, cancelling any cycle met on the way
        path = [src]
        pos = {src: 0}
        u = src
        while u != dst:
            nxt = next((v for v in out_edges.get(u, []) if flow.get((u, v), 0) > tol), None)
            if nxt is None:
                break
            if nxt in pos:
                cyc = path[pos[nxt]:] + [nxt]
                delta = min(flow[(a, b)] for a, b in zip(cyc, cyc[1:]))
                for a, b in zip(cyc, cyc[1:]):
                    flow[(a, b)] -= delta
                for w in path[pos[nxt] + 1:]:
                    del pos[w]
                path = path[:pos[nxt] + 1]
                u = nxt
                continue
            pos[nxt] = len(path)
            path.append(nxt)
            u = nxt
        if u != dst:
            break
        delta = min(flow[(a, b)] for a, b in zip(path, path[1:]))
        for a, b in zip(path, path[1:]):
            flow[(a, b)] -= delta
        paths.append((tuple(path), delta))
    return paths


def assignment_from_forest(model: LPModel, forest) -> dict:
    """Exact 0/1 values of an h-layered solution forest as LP variables.

    Every light agent keeps its lowest ``N`` children (the LP asks for
    exactly ``N``); the rest of its subtree is ignored. Raises when the
    forest does not fit the layered graph (a variable is missing).
    """
    lg = model.lg
    kids = forest.children()
    values: dict = {}
    level: dict = {}

    def origin(c):
        # walk down an item child to the light agent or source feeding it
        path = [c]
        u = c
        while True:
            below = kids.get(u, [])
            if not below:
                if u in forest.sources:
                    return SOURCE, path
                raise LPError(f"forest vertex {u} has no source")
            w = below[0]
            if w in forest.thresholds:
                return w, path
            path.append(w)
            u = w

    def lvl(a):
        if a not in level:
            o, _ = origin(kids[a][0])
            level[a] = 1 if o == SOURCE else lvl(o) + 1
        return level[a]

    def put(key, v=1):
        if key not in model.index:
            raise LPError(f"forest uses {key}, which is not an LP variable")
        values[key] = values.get(key, 0) + Fraction(v)

    def copy(v, hp, j):
        return ("I", hp, j, v[1]) if v[0] == "I" else ("H", hp, j, v[1])

    def feed(a, hp, lam):
        j = hp - len(lam) + 1
        need = int(lg.ci.light[a[1]].N)
        for c in kids.get(a, [])[:need]:
            o, path = origin(c)
            sub = lam + ((SOURCE,) if o == SOURCE else (o[1],))
            put(("y", hp, sub))
            verts = [SOURCE if o == SOURCE else ("L", hp, j - 1, o[1])]
            verts += [copy(v, hp, j) for v in reversed(path)] + [("L", hp, j, a[1])]
            for u, v in zip(verts, verts[1:]):
                put(("f", hp, sub, u, v))
            if o != SOURCE:
                feed(o, hp, sub)

    for t in forest.roots():
        if t[0] != "A" or t[1] not in lg.pa.T:
            continue
        # climb down the chain below the terminal to its top light agent
        chain = [t]
        u = t
        while u not in forest.thresholds:
            below = kids.get(u, [])
            if not below:
                raise LPError(f"terminal {t} has no light agent below it")
            u = below[0]
            chain.append(u)
        a = u
        hp = lvl(a)
        put(("y", hp, (a[1],)))
        verts = [("L", hp, hp, a[1])] + [("Ih", v[1]) if v[0] == "I" else ("Hh", v[1])
                                         for v in reversed(chain[:-1])]
        for x, y_ in zip(verts, verts[1:]):
            put(("t", x, y_))
        feed(a, hp, (a[1],))
    return values
