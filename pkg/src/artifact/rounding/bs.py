"""Tree decomposition of a fractional heavy-item assignment.

Input rows, exact over rationals:

1. every item: ``sum_A y[A, i] <= 1``
2. every agent: ``sum_i y[A, i] == 1 - x[A]``
3. ``0 <= y <= 1``

The output splits the support into matched edges (``y == 1``) and trees
whose items have degree exactly 2 and whose agents carry ``sum x > 1/2``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping

__all__ = ["BSError", "Tree", "TreeDecomposition", "bs_decompose", "tree_assignment", "check_rows"]

HALF = Fraction(1, 2)


class BSError(ValueError):
    pass


@dataclass(frozen=True)
class Tree:
    agents: frozenset
    items: frozenset
    edges: Mapping  # (agent, item) -> y

    def x_mass(self, x: Mapping) -> Fraction:
        return sum((Fraction(x.get(a, 0)) for a in self.agents), Fraction(0))


@dataclass
class TreeDecomposition:
    trees: list[Tree]
    matched: dict  # agent -> item, the single-edge trees
    steps: list[str] = field(default_factory=list)


def check_rows(agents: Iterable, items: Iterable, x: Mapping, y: Mapping) -> list[str]:
    """Violated rows (1)-(3) restricted to the given agents and items."""
    agents, items = set(agents), set(items)
    load_i: dict = {i: Fraction(0) for i in items}
    load_a: dict = {a: Fraction(0) for a in agents}
    out = []
    for (a, i), v in y.items():
        if a not in agents or i not in items:
            continue
        if v < 0 or v > 1:
            out.append(f"y[{a}, {i}] = {v} outside [0, 1]")
        load_i[i] += v
        load_a[a] += v
    out += [f"item {i}: load {v} > 1" for i, v in load_i.items() if v > 1]
    out += [f"agent {a}: load {v} != 1 - x = {1 - Fraction(x.get(a, 0))}"
            for a, v in load_a.items() if v != 1 - Fraction(x.get(a, 0))]
    return out


class _State:
    def __init__(self, agents, items, x, y, check):
        self.x = {a: Fraction(x.get(a, 0)) for a in agents}
        self.y = {e: Fraction(v) for e, v in y.items() if v != 0}
        self.live_a = set(agents)
        self.live_i = set(items)
        self.adj: dict = {v: set() for v in [("A", a) for a in agents] + [("I", i) for i in items]}
        for (a, i) in self.y:
            self.adj[("A", a)].add(("I", i))
            self.adj[("I", i)].add(("A", a))
        self.matched: dict = {}
        self.trees: list[Tree] = []
        self.steps: list[str] = []
        self.check = check
        # cut edges stay on record so emitted trees can be re-checked
        self.cut: dict = {}

    def drop_edge(self, a, i):
        self.y.pop((a, i), None)
        self.adj[("A", a)].discard(("I", i))
        self.adj[("I", i)].discard(("A", a))

    def remove_vertex(self, v):
        for u in list(self.adj[v]):
            if v[0] == "A":
                self.drop_edge(v[1], u[1])
            else:
                self.drop_edge(u[1], v[1])
        (self.live_a if v[0] == "A" else self.live_i).discard(v[1])

    def normalize(self):
        for (a, i), v in sorted(self.y.items(), key=lambda t: (repr(t[0][0]), repr(t[0][1]))):
            if (a, i) not in self.y:
                continue
            if v == 0:
                self.drop_edge(a, i)
            elif v == 1:
                self.match(a, i, "unit edge")

    def match(self, a, i, why):
        self.matched[a] = i
        self.steps.append(f"{why}: match agent {a} with item {i}")
        self.remove_vertex(("A", a))
        self.remove_vertex(("I", i))

    def verify(self, where):
        if not self.check:
            return
        live_y = {e: v for e, v in self.y.items()}
        bad = check_rows(self.live_a, self.live_i, self.x, live_y)
        if bad:
            raise BSError(f"rows broken after {where}: {bad[:3]}")


def bs_decompose(agents: Iterable[Hashable], items: Iterable[Hashable], x: Mapping, y: Mapping,
                 check: bool = True) -> TreeDecomposition:
    """Decompose the support of ``y`` into matched edges and fractional trees.

    Cycles are cancelled first by shifting ``delta`` around them, then items
    of degree one are matched to their agent, and finally items of degree
    three or more are split off at a child edge with ``y < 1/2``. With
    ``check`` the rows are re-verified after every step.
    """
    agents = sorted(set(agents), key=repr)
    items = sorted(set(items), key=repr)
    for (a, i) in y:
        if a not in set(agents) or i not in set(items):
            raise BSError(f"edge ({a}, {i}) has an unknown endpoint")
    bad = check_rows(agents, items, x, {e: Fraction(v) for e, v in y.items()})
    if bad:
        raise BSError("input violates the assignment rows: " + "; ".join(bad[:5]))
    st = _State(agents, items, x, y, check)
    st.normalize()
    st.verify("removing zero and unit edges")

    # step 1: cancel cycles
    while True:
        cyc = _find_cycle(st)
        if cyc is None:
            break
        edges = [(u, v) if u[0] == "A" else (v, u) for u, v in zip(cyc, cyc[1:] + cyc[:1])]
        vals = [st.y[(a[1], i[1])] for a, i in edges]
        k = min(range(len(vals)), key=lambda t: vals[t])
        delta = vals[k]
        # the matching holding the smallest edge is decreased
        for t, (a, i) in enumerate(edges):
            sign = -1 if t % 2 == k % 2 else 1
            st.y[(a[1], i[1])] += sign * delta
        st.steps.append(f"cycle of length {len(edges)} shifted by {delta}")
        st.normalize()
        st.verify("cycle cancelling")

    while True:
        # step 2: items of degree one
        leaf = next((i for i in items if i in st.live_i and len(st.adj[("I", i)]) == 1), None)
        if leaf is not None:
            (av,) = st.adj[("I", leaf)]
            a = av[1]
            for iv in list(st.adj[av]):
                st.drop_edge(a, iv[1])
            st.match(a, leaf, "degree-one item")
            st.verify("matching a degree-one item")
            continue
        # step 3: split at an item of degree >= 3
        if not _split_once(st, items):
            break
        st.verify("splitting a subtree")

    # remaining components are final trees
    seen = set()
    for a in agents:
        if a in st.live_a and ("A", a) not in seen:
            comp = _component(st, ("A", a))
            seen |= comp
            _emit(st, comp)
    for i in items:
        if i in st.live_i and not st.adj[("I", i)]:
            st.live_i.discard(i)
    return TreeDecomposition(st.trees, st.matched, st.steps)


def _emit(st: _State, comp: set, cut_edge=None) -> None:
    ag = frozenset(v[1] for v in comp if v[0] == "A")
    it = frozenset(v[1] for v in comp if v[0] == "I")
    edges = {(a, i): st.y[(a, i)] for (a, i) in st.y if a in ag and i in it}
    for a in ag:
        for iv in st.adj[("A", a)]:
            if iv[1] not in it:
                raise BSError("emitted tree is not a component")
    tree = Tree(ag, it, edges)
    degs = {i: sum(1 for (_, j) in edges if j == i) for i in it}
    if any(d != 2 for d in degs.values()):
        raise BSError(f"tree item degrees {degs} are not all 2")
    if tree.x_mass(st.x) <= HALF:
        raise BSError(f"tree carries x mass {tree.x_mass(st.x)} <= 1/2")
    if st.check:
        y_full = dict(edges)
        if cut_edge is not None:
            y_full[cut_edge[0]] = cut_edge[1]
        extra = {cut_edge[0][1]} if cut_edge is not None else set()
        bad = [b for b in check_rows(ag, it | extra, st.x, y_full) if not b.startswith("item")]
        if bad:
            raise BSError(f"emitted tree breaks agent rows: {bad[:3]}")
    st.trees.append(tree)
    for v in comp:
        (st.live_a if v[0] == "A" else st.live_i).discard(v[1])
    st.steps.append(f"tree with {len(ag)} agents and {len(it)} items, x mass {tree.x_mass(st.x)}")


def _component(st: _State, start) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in st.adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _find_cycle(st: _State):
    """A cycle in the live support as an alternating vertex list, or None."""
    color: dict = {}
    for root in sorted(st.adj, key=repr):
        if root in color or not st.adj[root]:
            continue
        parent = {root: None}
        color[root] = 0
        stack = [(root, iter(sorted(st.adj[root], key=repr)))]
        while stack:
            u, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                continue
            if nxt == parent[u]:
                continue
            if nxt in color:
                if nxt in parent and _on_stack(stack, nxt):
                    cyc = [u]
                    w = u
                    while w != nxt:
                        w = parent[w]
                        cyc.append(w)
                    return cyc[::-1]
                continue
            color[nxt] = 0
            parent[nxt] = u
            stack.append((nxt, iter(sorted(st.adj[nxt], key=repr))))
    return None


def _on_stack(stack, v) -> bool:
    return any(u == v for u, _ in stack)


def _split_once(st: _State, items) -> bool:
    """One step 3 split; returns False when every live item has degree <= 2."""
    seen: set = set()
    for r in items:
        if r not in st.live_i or ("I", r) in seen or not st.adj[("I", r)]:
            continue
        comp = _component(st, ("I", r))
        seen |= comp
        if all(len(st.adj[v]) <= 2 for v in comp if v[0] == "I"):
            continue
        root = ("I", r)
        parent = {root: None}
        depth = {root: 0}
        order = [root]
        for u in order:
            for v in sorted(st.adj[u], key=repr):
                if v not in parent:
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    order.append(v)
        big = [v for v in order if v[0] == "I" and len(st.adj[v]) >= 3]
        node = max(big, key=lambda v: (depth[v], repr(v)))
        kids = sorted((v for v in st.adj[node] if parent.get(v) == node), key=repr)
        light = [a for a in kids if st.y[(a[1], node[1])] < HALF]
        if not light:
            raise BSError(f"item {node[1]} has no child edge below 1/2")
        child = light[0]
        val = st.y[(child[1], node[1])]
        st.drop_edge(child[1], node[1])
        st.steps.append(f"split child agent {child[1]} off item {node[1]} (y = {val})")
        _emit(st, _component(st, child), cut_edge=((child[1], node[1]), val))
        return True
    return False


def tree_assignment(tree: Tree, root) -> dict:
    """Give every agent other than ``root`` its parent item when rooted at ``root``."""
    if root not in tree.agents:
        raise BSError(f"{root} is not an agent of the tree")
    adj: dict = {}
    for (a, i) in tree.edges:
        adj.setdefault(("A", a), []).append(("I", i))
        adj.setdefault(("I", i), []).append(("A", a))
    out = {}
    seen = {("A", root)}
    queue = deque([("A", root)])
    while queue:
        u = queue.popleft()
        for v in sorted(adj.get(u, []), key=repr):
            if v in seen:
                continue
            seen.add(v)
            queue.append(v)
            if v[0] == "A":
                out[v[1]] = u[1]
    return out
