"""Private items, the flow network over agents and items, and its path form.

Vertices are labelled ``"s"``, ``("A", agent)`` and ``("I", item)``. A
path is a tuple of labels with the source left implicit: it begins either
at an item of ``S`` (flow fed by the source) or at a light agent.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .canonical import CanonicalInstance
from .instance import Allocation, InstanceError, as_fraction

__all__ = [
    "FlowNetError",
    "PrivateAssignment",
    "make_private",
    "check_good",
    "assign_private_items",
    "konig_cover",
    "FlowNetwork",
    "build_network",
    "check_alpha_feasible",
    "SolutionForest",
    "forest_from_allocation",
    "forest_paths",
    "layerize",
    "extract_allocation",
    "agent_label",
    "item_label",
]

SOURCE = "s"


def agent_label(a: int) -> tuple[str, int]:
    return ("A", a)


def item_label(i: int) -> tuple[str, int]:
    return ("I", i)


class FlowNetError(InstanceError):
    pass


@dataclass(frozen=True)
class PrivateAssignment:
    P: Mapping[int, int]
    T: frozenset[int]
    S: frozenset[int]

    def owner_of(self) -> dict[int, int]:
        """Inverse map item -> agent whose private item it is."""
        return {i: a for a, i in self.P.items()}


def make_private(ci: CanonicalInstance, P: Mapping[int, int]) -> PrivateAssignment:
    """Complete ``P`` with its terminal set and free-item set."""
    P = dict(sorted(P.items()))
    T = frozenset(a for a in ci.heavy if a not in P)
    S = frozenset(range(ci.n_items)) - frozenset(P.values())
    return PrivateAssignment(P, T, S)


def check_good(ci: CanonicalInstance, pa: PrivateAssignment) -> list[str]:
    """Violations of the private-assignment rules (empty when good)."""
    out = []
    seen: dict[int, int] = {}
    for a, i in pa.P.items():
        if i in seen:
            out.append(f"item {i} is private to both {seen[i]} and {a}")
        seen[i] = a
        if a in ci.light:
            if i != ci.light[a].heavy_item:
                out.append(f"light agent {a} has private item {i}, expected {ci.light[a].heavy_item}")
        elif a in ci.heavy:
            if i not in ci.heavy[a]:
                out.append(f"heavy agent {a} has private item {i} outside its admissible set")
        else:
            out.append(f"private item assigned to unknown agent {a}")
    for a in ci.light:
        if a not in pa.P:
            out.append(f"light agent {a} has no private item")
    if pa.T != frozenset(a for a in ci.heavy if a not in pa.P):
        out.append("terminal set does not match heavy agents without private items")
    return out


def assign_private_items(ci: CanonicalInstance) -> PrivateAssignment:
    """Light agents keep their heavy items; heavy agents get a maximum matching.

    Augmenting paths are searched from heavy agents in id order, scanning
    items in id order, so the result is deterministic.
    """
    reserved = {spec.heavy_item for spec in ci.light.values()}
    match_item: dict[int, int] = {}
    match_agent: dict[int, int] = {}
    options = {a: sorted(i for i in g if i not in reserved) for a, g in ci.heavy.items()}

    def augment(a: int, seen: set[int]) -> bool:
        for i in options[a]:
            if i in seen:
                continue
            seen.add(i)
            if i not in match_item or augment(match_item[i], seen):
                match_item[i] = a
                match_agent[a] = i
                return True
        return False

    for a in sorted(ci.heavy):
        augment(a, set())
    P = {a: spec.heavy_item for a, spec in ci.light.items()}
    P.update(match_agent)
    return make_private(ci, P)


def konig_cover(ci: CanonicalInstance, pa: PrivateAssignment) -> tuple[set[int], set[int]]:
    """Minimum vertex cover (heavy agents, items) of the heavy matching graph.

    Its size equals the number of matched heavy agents exactly when the
    matching is maximum, which certifies that ``|T|`` is minimal.
    """
    reserved = {spec.heavy_item for spec in ci.light.values()}
    matched = {a: i for a, i in pa.P.items() if a in ci.heavy}
    by_item = {i: a for a, i in matched.items()}
    seen_agents = set()
    seen_items = set()
    queue = deque(a for a in sorted(ci.heavy) if a not in matched)
    seen_agents.update(queue)
    while queue:
        a = queue.popleft()
        for i in sorted(ci.heavy[a]):
            if i in reserved or i in seen_items or matched.get(a) == i:
                continue
            seen_items.add(i)
            b = by_item.get(i)
            if b is not None and b not in seen_agents:
                seen_agents.add(b)
                queue.append(b)
    return set(ci.heavy) - seen_agents, seen_items


@dataclass
class FlowNetwork:
    ci: CanonicalInstance
    pa: PrivateAssignment
    succ: dict = field(default_factory=dict)

    def has_edge(self, u, v) -> bool:
        return v in self.succ.get(u, ())

    def is_light(self, label) -> bool:
        return label[0] == "A" and label[1] in self.ci.light

    def is_terminal(self, label) -> bool:
        return label[0] == "A" and label[1] in self.pa.T

    def reach_without_light(self) -> tuple[set[int], set[int]]:
        """(H*, I*): heavy agents and items reachable from s avoiding light agents."""
        seen = {SOURCE}
        queue = deque([SOURCE])
        while queue:
            u = queue.popleft()
            for v in self.succ.get(u, ()):
                if v in seen or self.is_light(v):
                    continue
                seen.add(v)
                queue.append(v)
        heavy = {v[1] for v in seen if v != SOURCE and v[0] == "A"}
        items = {v[1] for v in seen if v != SOURCE and v[0] == "I"}
        return heavy, items


def build_network(ci: CanonicalInstance, pa: PrivateAssignment) -> FlowNetwork:
    problems = check_good(ci, pa)
    if problems:
        raise FlowNetError("private assignment is not good: " + "; ".join(problems))
    succ: dict = {SOURCE: set()}
    for i in sorted(pa.S):
        succ[SOURCE].add(item_label(i))
    for a, i in pa.P.items():
        succ.setdefault(agent_label(a), set()).add(item_label(i))
    for a, gamma in ci.heavy.items():
        for i in gamma:
            if pa.P.get(a) != i:
                succ.setdefault(item_label(i), set()).add(agent_label(a))
    for a, spec in ci.light.items():
        for i in spec.light_items:
            succ.setdefault(item_label(i), set()).add(agent_label(a))
    return FlowNetwork(ci, pa, {u: frozenset(vs) for u, vs in succ.items()})


def _interior(path: Sequence, net: FlowNetwork) -> list:
    """Vertices of a path that must not be shared with any other path."""
    body = list(path[:-1])
    if body and net.is_light(body[0]):
        body = body[1:]
    return body


def check_alpha_feasible(net: FlowNetwork, paths: Iterable[Sequence], alpha) -> tuple[bool, list[str]]:
    """Check the simple-path conditions with light quotas relaxed by ``alpha``."""
    alpha = as_fraction(alpha)
    paths = [tuple(p) for p in paths]
    diag = []
    used: dict = {}
    starts: dict[int, int] = {}
    incoming: dict[int, int] = {}
    ends_at_terminal: dict[int, int] = {}
    for k, p in enumerate(paths):
        if len(p) < 2:
            diag.append(f"path {k} has fewer than two vertices")
            continue
        first, last = p[0], p[-1]
        if first[0] == "I":
            if first[1] not in net.pa.S:
                diag.append(f"path {k} starts at item {first[1]} which is not fed by the source")
        elif not net.is_light(first):
            diag.append(f"path {k} starts at {first}, neither a free item nor a light agent")
        else:
            starts[first[1]] = starts.get(first[1], 0) + 1
        for u, v in zip(p, p[1:]):
            if not net.has_edge(u, v):
                diag.append(f"path {k} uses missing edge {u} -> {v}")
        for v in p[1:-1]:
            if net.is_light(v):
                diag.append(f"path {k} passes through light agent {v[1]}")
        if net.is_terminal(last):
            ends_at_terminal[last[1]] = ends_at_terminal.get(last[1], 0) + 1
        elif net.is_light(last):
            incoming[last[1]] = incoming.get(last[1], 0) + 1
        else:
            diag.append(f"path {k} ends at {last}, neither a terminal nor a light agent")
        for v in _interior(p, net):
            if v in used:
                diag.append(f"vertex {v} is interior to paths {used[v]} and {k}")
            else:
                used[v] = k
    for t in sorted(net.pa.T):
        c = ends_at_terminal.get(t, 0)
        if c != 1:
            diag.append(f"terminal {t} has {c} paths ending at it, expected 1")
    for a, c in sorted(starts.items()):
        if c > 1:
            diag.append(f"light agent {a} starts {c} paths")
        need = net.ci.light[a].N / alpha
        if incoming.get(a, 0) < need:
            diag.append(f"light agent {a} sends flow but receives {incoming.get(a, 0)} < N/alpha = {need}")
    return not diag, diag


def extract_allocation(ci: CanonicalInstance, pa: PrivateAssignment, paths: Iterable[Sequence],
                       alpha=None) -> Allocation:
    """Items on a path go to the agent right after them; everyone else keeps P(A)."""
    paths = [tuple(p) for p in paths]
    if alpha is not None:
        ok, diag = check_alpha_feasible(build_network(ci, pa), paths, alpha)
        if not ok:
            raise FlowNetError("infeasible path set: " + "; ".join(diag[:5]))
    owner = {i: a for a, i in pa.P.items()}
    moved: dict[int, int] = {}
    for p in paths:
        for u, v in zip(p, p[1:]):
            if u[0] == "I" and v[0] == "A":
                if u[1] in moved and moved[u[1]] != v[1]:
                    raise FlowNetError(f"item {u[1]} routed to agents {moved[u[1]]} and {v[1]}")
                moved[u[1]] = v[1]
    owner.update(moved)
    return Allocation(owner)


@dataclass(frozen=True)
class SolutionForest:
    """Flow trees as a child -> parent map over network labels.

    ``thresholds`` holds N_A for light agents; ``sources`` are the items
    fed directly by s (the leaves).
    """

    parent: Mapping
    thresholds: Mapping
    sources: frozenset

    def children(self) -> dict:
        out: dict = {}
        for c, p in self.parent.items():
            out.setdefault(p, []).append(c)
        for p in out:
            out[p].sort()
        return out

    def roots(self) -> list:
        kids = set(self.parent)
        return sorted({p for p in self.parent.values() if p not in kids})


def forest_from_allocation(ci: CanonicalInstance, pa: PrivateAssignment,
                           alloc: Allocation) -> SolutionForest:
    """Flow trees induced by an allocation that 1-satisfies every agent."""
    held: dict[int, set[int]] = {}
    for i, a in alloc.owner.items():
        held.setdefault(a, set()).add(i)
    priv_of = pa.owner_of()
    # an agent either keeps its private item or is fed through other items;
    # a private item that nobody else uses goes back to its owner
    keeps = {a for a, i in pa.P.items() if i in held.get(a, set())}
    while True:
        use: dict[int, list[int]] = {}
        for a in ci.agents:
            if a in keeps:
                continue
            mine = held.get(a, set())
            if a in ci.heavy:
                use[a] = sorted(i for i in mine if i in ci.heavy[a])[:1]
            else:
                spec = ci.light[a]
                use[a] = sorted(i for i in mine if i in spec.light_items)[:-(-spec.N // 1)]
        taken = {i for items in use.values() for i in items}
        back = [a for a, i in pa.P.items() if a not in keeps and i not in taken]
        if not back:
            break
        keeps.update(back)
    parent = {}
    for a, items in use.items():
        if a in ci.heavy and not items:
            raise FlowNetError(f"heavy agent {a} is not satisfied by the allocation")
        if a in ci.light and len(items) < ci.light[a].N:
            raise FlowNetError(f"light agent {a} is not satisfied by the allocation")
        for i in items:
            parent[item_label(i)] = agent_label(a)
            if i not in pa.S:
                parent[agent_label(priv_of[i])] = item_label(i)
    thresholds = {agent_label(a): spec.N for a, spec in ci.light.items()}
    return SolutionForest(parent, thresholds, frozenset(item_label(i) for i in pa.S))


def forest_paths(forest: SolutionForest) -> list[tuple]:
    """Cut every tree at its light agents into simple paths (source left implicit)."""
    kids = forest.children()
    out = []

    def is_start(v) -> bool:
        return v in forest.thresholds or (v in forest.sources and v not in kids)

    for v in sorted(set(forest.parent)):
        if not is_start(v):
            continue
        path = [v]
        u = v
        while u in forest.parent:
            u = forest.parent[u]
            path.append(u)
            if u in forest.thresholds:
                break
        if len(path) >= 2:
            out.append(tuple(path))
    return out


def _origin(v, forest: SolutionForest, kids):
    """Walk down from an item child to the light agent (or source) feeding it."""
    u = v
    while True:
        below = kids.get(u, [])
        if not below:
            return SOURCE if u in forest.sources else None
        w = below[0]
        if w in forest.thresholds:
            return w
        u = w


def layerize(forest: SolutionForest, h: int, n: int | None = None, epsilon=None) -> SolutionForest:
    """Prune a feasible forest so every root-to-leaf path has the same light depth.

    Light agents fed by at least N/(h+1) source paths are level 1; those fed
    by at least N/(h+1) level-(j-1) agents are level j. Children not on such
    feeding paths are cut away with their subtrees. Raises when a light agent
    survives without a level.
    """
    if h < 1:
        raise FlowNetError("h must be at least 1")
    parent = dict(forest.parent)
    level: dict = {}

    def prune(v):
        stack = [v]
        while stack:
            u = stack.pop()
            for c in [c for c, p in parent.items() if p == u]:
                stack.append(c)
            parent.pop(u, None)

    for j in range(1, h + 1):
        cur = SolutionForest(parent, forest.thresholds, forest.sources)
        kids = cur.children()
        want = SOURCE if j == 1 else None
        for a in sorted(forest.thresholds):
            if a in level or (a not in parent and a not in kids):
                continue
            good, bad = [], []
            for c in kids.get(a, []):
                o = _origin(c, cur, kids)
                if (j == 1 and o == want) or (j > 1 and o is not None and level.get(o) == j - 1):
                    good.append(c)
                else:
                    bad.append(c)
            if len(good) * (h + 1) >= forest.thresholds[a]:
                level[a] = j
                for c in bad:
                    prune(c)
    out = SolutionForest(parent, forest.thresholds, forest.sources)
    kids = out.children()
    for a in forest.thresholds:
        if (a in parent or a in kids) and a not in level:
            hint = "" if n is None else f" (n={n}, epsilon={epsilon}: the counting bound may fail at this size)"
            raise FlowNetError(f"light agent {a} has no level after {h} rounds{hint}")
    return out
