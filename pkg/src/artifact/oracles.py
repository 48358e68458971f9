"""Exact and constant-factor reference solvers used as test oracles."""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .instance import Allocation, Instance, InstanceError
from .maxflow import FlowGraph

__all__ = [
    "GuardExceeded",
    "BRUTE_FORCE_LIMIT",
    "VECTOR_LIMIT",
    "brute_force_opt",
    "branch_and_bound_opt",
    "solve_vector_enumeration",
    "power_class",
]

BRUTE_FORCE_LIMIT = 10**7
VECTOR_LIMIT = 10**7


class GuardExceeded(InstanceError):
    """An enumeration would exceed its configured size limit."""


def brute_force_opt(inst: Instance) -> tuple[Fraction, Allocation]:
    """Exact optimum by enumerating every owner choice for every item.

    Giving an item away never lowers anyone's utility, so it suffices to
    range each item over the agents that want it. Utilities are scaled to
    integers and the assignments are scanned in numpy blocks, in the order
    of ``itertools.product``; the first best assignment wins.

    >>> inst = Instance(2, 2, {(0, 0): 4, (0, 1): 1, (1, 0): 1, (1, 1): 4})
    >>> brute_force_opt(inst)[0]
    Fraction(4, 1)
    """
    wanters = inst.by_item()
    items = [i for i in range(inst.n) if wanters[i]]
    size = 1
    for i in items:
        size *= len(wanters[i])
    if size > BRUTE_FORCE_LIMIT:
        raise GuardExceeded(
            f"{size} assignments exceed the enumeration limit {BRUTE_FORCE_LIMIT}")
    if not items:
        return Fraction(0), Allocation({})
    scale = math.lcm(*(u.denominator for u in inst.utilities.values()))
    if sum(inst.utilities.values()) * scale >= 2**62:
        return _brute_force_python(inst, items, wanters)
    choice = _best_index(inst, items, wanters, scale, size)
    owner = {}
    for i in reversed(items):
        r = len(wanters[i])
        owner[i] = wanters[i][choice % r]
        choice //= r
    alloc = Allocation(owner)
    tot = [Fraction(0)] * inst.m
    for i, a in owner.items():
        tot[a] += inst.u(a, i)
    return min(tot), alloc


def _best_index(inst: Instance, items, wanters, scale: int, size: int, block: int = 1 << 16) -> int:
    """Mixed-radix index (last item fastest) of the first assignment with the best minimum."""
    radix = [len(wanters[i]) for i in items]
    stride = [1] * len(items)
    for k in range(len(items) - 2, -1, -1):
        stride[k] = stride[k + 1] * radix[k + 1]
    agents = [np.array(wanters[i], dtype=np.int64) for i in items]
    gains = [np.array([int(inst.u(a, i) * scale) for a in wanters[i]], dtype=np.int64) for i in items]
    best_val, best_idx = -1, 0
    for lo in range(0, size, block):
        idx = np.arange(lo, min(size, lo + block), dtype=np.int64)
        tot = np.zeros((len(idx), inst.m), dtype=np.int64)
        rows = np.arange(len(idx))
        for k in range(len(items)):
            pick = (idx // stride[k]) % radix[k]
            np.add.at(tot, (rows, agents[k][pick]), gains[k][pick])
        low = tot.min(axis=1)
        j = int(np.argmax(low))
        if int(low[j]) > best_val:
            best_val, best_idx = int(low[j]), lo + j
    return best_idx


def _brute_force_python(inst: Instance, items, wanters) -> tuple[Fraction, Allocation]:
    choices = [[(a, inst.u(a, i)) for a in wanters[i]] for i in items]
    best_val = Fraction(-1)
    best = None
    for combo in itertools.product(*choices):
        tot = [Fraction(0)] * inst.m
        for a, u in combo:
            tot[a] += u
        v = min(tot)
        if v > best_val:
            best_val = v
            best = combo
    return best_val, Allocation({i: a for i, (a, _) in zip(items, best)})


def branch_and_bound_opt(inst: Instance, node_limit: int = 5 * 10**6) -> tuple[Fraction, Allocation]:
    """Exact optimum by depth-first search with an optimistic bound.

    Items wanted by a single agent are handed to it up front. The remaining
    items are branched on, most-contested first, and a branch is cut when
    some agent cannot beat the incumbent even if it won every open item.
    """
    wanters = inst.by_item()
    util = [Fraction(0)] * inst.m
    owner: dict[int, int] = {}
    open_items = []
    for i in range(inst.n):
        if len(wanters[i]) == 1:
            a = wanters[i][0]
            owner[i] = a
            util[a] += inst.u(a, i)
        elif wanters[i]:
            open_items.append(i)
    open_items.sort(key=lambda i: (-len(wanters[i]), i))
    potential = [Fraction(0)] * inst.m
    for i in open_items:
        for a in wanters[i]:
            potential[a] += inst.u(a, i)

    best = [min(util), dict(owner)]
    nodes = [0]

    def dfs(k: int) -> None:
        nodes[0] += 1
        if nodes[0] > node_limit:
            raise GuardExceeded(f"search exceeded {node_limit} nodes")
        if min(u + p for u, p in zip(util, potential)) <= best[0]:
            return
        if k == len(open_items):
            best[0] = min(util)
            best[1] = dict(owner)
            return
        i = open_items[k]
        ws = wanters[i]
        for a in ws:
            potential[a] -= inst.u(a, i)
        # try the currently poorest wanter first
        for a in sorted(ws, key=lambda a: (util[a], a)):
            util[a] += inst.u(a, i)
            owner[i] = a
            dfs(k + 1)
            util[a] -= inst.u(a, i)
            del owner[i]
        for a in ws:
            potential[a] += inst.u(a, i)

    dfs(0)
    return best[0], Allocation(best[1])


def power_class(u: Fraction) -> int:
    """Largest j with 2**j <= u, for positive rational u."""
    j = u.numerator.bit_length() - u.denominator.bit_length()
    if Fraction(2) ** j > u:
        j -= 1
    return j


def _counts_for(c: int) -> list[int]:
    out = [0]
    p = 1
    while p <= c:
        out.append(p)
        p *= 2
    return out


def _minimal_vectors(classes: list[int], counts: list[int], target: Fraction) -> list[tuple[int, ...]]:
    """Power-of-two count vectors reaching ``target`` that are minimal under dominance."""
    options = [_counts_for(c) for c in counts]
    hits = []
    for vec in itertools.product(*options):
        if sum(Fraction(2) ** j * v for j, v in zip(classes, vec)) >= target:
            hits.append(vec)
    hit_set = set(hits)
    minimal = []
    for vec in hits:
        dominated = False
        for k, v in enumerate(vec):
            if v == 0:
                continue
            smaller = v // 2
            if vec[:k] + (smaller,) + vec[k + 1:] in hit_set:
                dominated = True
                break
        if not dominated:
            minimal.append(vec)
    return sorted(minimal)


def _feasible(inst, profile, family) -> dict[int, int] | None:
    """Degree-constrained matching test for one vector per agent."""
    g = FlowGraph()
    need = 0
    for a, vec in enumerate(family):
        classes, members = profile[a]
        for j, v, items in zip(classes, vec, members):
            if v == 0:
                continue
            need += v
            g.add_edge("src", ("agent", a, j), v)
            for i in items:
                g.add_edge(("agent", a, j), ("item", i), 1)
    for i in range(inst.n):
        g.add_edge(("item", i), "sink", 1)
    if g.max_flow("src", "sink") != need:
        return None
    owner = {}
    for label in g.labels:
        if isinstance(label, tuple) and label[0] == "agent":
            for _, head, f in g.edges_from(label):
                if f > 0 and isinstance(head, tuple) and head[0] == "item":
                    owner[head[1]] = label[1]
    return owner


def solve_vector_enumeration(inst: Instance) -> tuple[Fraction, Allocation]:
    """Constant-factor solution by enumerating rounded demand vectors.

    Utilities are rounded down to powers of two and per-class item counts
    to powers of two. For a target value every agent picks a count vector
    whose rounded worth reaches it; a family is feasible when a bipartite
    degree-constrained matching realises it. The best target is found by
    binary search. The answer is at least a quarter of the optimum.
    """
    profile = []
    space = 1
    for a in range(inst.m):
        by_class: dict[int, list[int]] = {}
        for i in inst.wanted(a):
            by_class.setdefault(power_class(inst.u(a, i)), []).append(i)
        classes = sorted(by_class)
        members = [by_class[j] for j in classes]
        profile.append((classes, members))
        for items in members:
            space *= len(_counts_for(len(items)))
    if space > VECTOR_LIMIT:
        raise GuardExceeded(f"vector enumeration space {space} exceeds {VECTOR_LIMIT}")

    # candidate targets: worths of single-agent vectors
    worths = set()
    for classes, members in profile:
        for vec in itertools.product(*[_counts_for(len(m)) for m in members]):
            worths.add(sum(Fraction(2) ** j * v for j, v in zip(classes, vec)))
    candidates = sorted(w for w in worths if w > 0)

    def attempt(target: Fraction):
        per_agent = []
        for classes, members in profile:
            vecs = _minimal_vectors(classes, [len(m) for m in members], target)
            if not vecs:
                return None
            per_agent.append(vecs)
        for family in itertools.product(*per_agent):
            owner = _feasible(inst, profile, family)
            if owner is not None:
                return owner
        return None

    best_owner: dict[int, int] = {}
    lo = 0
    hi = len(candidates) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        owner = attempt(candidates[mid])
        if owner is not None:
            best_owner = owner
            lo = mid + 1
        else:
            hi = mid - 1
    alloc = Allocation(best_owner)
    tot = [Fraction(0)] * inst.m
    for i, a in alloc.owner.items():
        tot[a] += inst.u(a, i)
    return min(tot), alloc
