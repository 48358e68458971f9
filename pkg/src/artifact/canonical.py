"""Canonical instances: heavy agents, light agents and the reduction to them.

A heavy agent wants a set of items at utility ``M``. A light agent owns a
distinct heavy item at utility ``M`` and a set of light items, each worth
``M / N`` to it. The reduction replaces every agent of a normalized
instance by one heavy "big item" agent, ``s`` light agents (one per
utility bucket) and ``s`` companion heavy agents sharing ``s`` filler
items.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

import mpmath

from .instance import Allocation, Instance, InstanceError, as_fraction
from .maxflow import FlowGraph

__all__ = [
    "LightSpec",
    "CanonicalInstance",
    "BackMap",
    "CanonicalError",
    "TrivialRegime",
    "bucket_count",
    "canonicalize",
    "embed_solution",
    "lift_solution",
    "validate_canonical",
    "scale_for_layers",
    "single_item_allocation",
    "meets_threshold",
]


class CanonicalError(InstanceError):
    pass


class TrivialRegime(CanonicalError):
    """The target is too small for bucketing; one item per agent suffices."""

    def __init__(self, s: int):
        super().__init__(f"bucket count s = {s} <= 0; use the single-item allocation")
        self.s = s


@dataclass(frozen=True)
class LightSpec:
    heavy_item: int
    N: Fraction
    light_items: frozenset[int]


@dataclass(frozen=True)
class CanonicalInstance:
    M: Fraction
    n_items: int
    heavy: Mapping[int, frozenset[int]]
    light: Mapping[int, LightSpec]
    epsilon: Fraction = Fraction(1, 2)
    # item count used in the n^epsilon threshold (the pre-reduction n)
    base_n: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "M", as_fraction(self.M))
        object.__setattr__(self, "epsilon", as_fraction(self.epsilon))
        object.__setattr__(self, "heavy", {a: frozenset(g) for a, g in sorted(self.heavy.items())})
        object.__setattr__(self, "light", dict(sorted(self.light.items())))
        if self.M <= 0:
            raise CanonicalError("M must be positive")
        overlap = set(self.heavy) & set(self.light)
        if overlap:
            raise CanonicalError(f"agents {sorted(overlap)} are both heavy and light")

    @property
    def agents(self) -> list[int]:
        return sorted(list(self.heavy) + list(self.light))

    @property
    def threshold_n(self) -> int:
        return self.base_n if self.base_n is not None else self.n_items

    def utility(self, agent: int, item: int) -> Fraction:
        if agent in self.heavy:
            return self.M if item in self.heavy[agent] else Fraction(0)
        spec = self.light[agent]
        if item == spec.heavy_item:
            return self.M
        if item in spec.light_items:
            return self.M / spec.N
        return Fraction(0)

    def to_instance(self) -> Instance:
        agents = self.agents
        if agents != list(range(len(agents))):
            raise CanonicalError("agent ids are not dense; cannot build a plain instance")
        util = {}
        for a, gamma in self.heavy.items():
            for i in gamma:
                util[(a, i)] = self.M
        for a, spec in self.light.items():
            for i in spec.light_items:
                util[(a, i)] = self.M / spec.N
            util[(a, spec.heavy_item)] = self.M
        return Instance(len(agents), self.n_items, util)

    def restrict(self, keep: Iterable[int]) -> "CanonicalInstance":
        keep = set(keep)
        return replace(self,
                       heavy={a: g for a, g in self.heavy.items() if a in keep},
                       light={a: s for a, s in self.light.items() if a in keep})


@dataclass(frozen=True)
class BackMap:
    """Where every canonical agent and added item came from."""

    s: int
    M: Fraction
    n_original: int
    # canonical agent -> (origin agent, "chi" | "lambda", bucket index)
    roles: Mapping[int, tuple[int, str, int]] = field(default_factory=dict)
    # added item -> ("h", origin, j) or ("Y", origin, k)
    item_origin: Mapping[int, tuple[str, int, int]] = field(default_factory=dict)

    def agents_of(self, origin: int) -> dict[tuple[str, int], int]:
        return {(kind, j): a for a, (b, kind, j) in self.roles.items() if b == origin}


def meets_threshold(value: Fraction, n: int, epsilon: Fraction) -> bool:
    """Exact test of ``value >= n ** epsilon`` for rational epsilon."""
    value = Fraction(value)
    if value <= 0:
        return False
    p, q = epsilon.numerator, epsilon.denominator
    if q <= 64 and p <= 64:
        return value ** q >= Fraction(n) ** p
    return float(value) >= n ** float(epsilon)


def bucket_count(n: int, M, epsilon) -> int:
    """Number of utility buckets, floor(log2(M / (n^eps * log2 n)))."""
    if n < 2:
        return 0
    M = as_fraction(M)
    eps = as_fraction(epsilon)
    with mpmath.workdps(60):
        ratio = mpmath.mpf(M.numerator) / M.denominator
        ratio /= mpmath.power(n, mpmath.mpf(eps.numerator) / eps.denominator) * mpmath.log(n, 2)
        if ratio <= 0:
            return 0
        return int(mpmath.floor(mpmath.log(ratio, 2)))


def _bucket(u: Fraction, s: int) -> int:
    """0 for the big-item class, otherwise the bucket j in 1..s."""
    if u > 2 ** s:
        return 0
    if u <= 2:
        return 1
    # smallest j with u <= 2^j
    j = math.ceil(math.log2(u))
    while Fraction(2) ** (j - 1) >= u:
        j -= 1
    while Fraction(2) ** j < u:
        j += 1
    return j


def canonicalize(inst: Instance, M, epsilon) -> tuple[CanonicalInstance, BackMap]:
    """Build the canonical instance of a normalized instance for target ``M``."""
    M = as_fraction(M)
    eps = as_fraction(epsilon)
    n = inst.n
    if M <= 0:
        raise CanonicalError("M must be positive")
    if not (0 < eps):
        raise CanonicalError("epsilon must be positive")
    if n >= 2 and float(n) ** float(eps) < math.log2(n) ** 8:
        warnings.warn(f"n^eps = {float(n) ** float(eps):.3g} is below log^8 n = "
                      f"{math.log2(n) ** 8:.3g}; thresholds are not in the asymptotic regime",
                      stacklevel=2)
    s = bucket_count(n, M, eps)
    if s <= 0:
        raise TrivialRegime(s)

    heavy: dict[int, frozenset[int]] = {}
    light: dict[int, LightSpec] = {}
    roles: dict[int, tuple[int, str, int]] = {}
    item_origin: dict[int, tuple[str, int, int]] = {}
    next_item = n
    for b in range(inst.m):
        base = b * (2 * s + 1)
        chi = [base + j for j in range(s + 1)]
        lam = {j: base + s + j for j in range(1, s + 1)}
        h_items = {}
        for j in range(1, s + 1):
            h_items[j] = next_item
            item_origin[next_item] = ("h", b, j)
            next_item += 1
        filler = []
        for k in range(1, s + 1):
            filler.append(next_item)
            item_origin[next_item] = ("Y", b, k)
            next_item += 1
        buckets: dict[int, set[int]] = {j: set() for j in range(s + 1)}
        for i in inst.wanted(b):
            if inst.u(b, i) < 1:
                raise CanonicalError(
                    f"utility {inst.u(b, i)} of agent {b} for item {i} is below 1; normalize first")
            buckets[_bucket(inst.u(b, i), s)].add(i)
        heavy[chi[0]] = frozenset(buckets[0]) | frozenset(filler)
        roles[chi[0]] = (b, "chi", 0)
        for j in range(1, s + 1):
            heavy[chi[j]] = frozenset([h_items[j]]) | frozenset(filler)
            roles[chi[j]] = (b, "chi", j)
            light[lam[j]] = LightSpec(h_items[j], M / (s * 2 ** j), frozenset(buckets[j]))
            roles[lam[j]] = (b, "lambda", j)
    ci = CanonicalInstance(M, next_item, heavy, light, eps, base_n=n)
    return ci, BackMap(s, M, n, roles, item_origin)


def embed_solution(inst: Instance, alloc: Allocation, ci: CanonicalInstance,
                   back: BackMap) -> Allocation:
    """Turn an allocation of value >= M into one that 1-satisfies ``ci``.

    Follows the constructive direction of the reduction: an agent with a
    big item hands it to its heavy agent; otherwise the richest bucket
    goes to the matching light agent.
    """
    s = back.s
    owner: dict[int, int] = {}
    bundles = alloc.bundles(inst.m)
    fillers = {b: sorted(i for i, (kind, bb, _) in back.item_origin.items()
                         if kind == "Y" and bb == b) for b in range(inst.m)}
    h_of = {(b, j): i for i, (kind, b, j) in back.item_origin.items() if kind == "h"}
    for b in range(inst.m):
        agents = back.agents_of(b)
        parts: dict[int, list[int]] = {j: [] for j in range(s + 1)}
        for i in bundles[b]:
            u = inst.u(b, i)
            if u > 0:
                parts[_bucket(u, s)].append(i)
        free_chi = None
        if parts[0]:
            owner[parts[0][0]] = agents[("chi", 0)]
            free_chi = 0
        else:
            for j in range(1, s + 1):
                spec = ci.light[agents[("lambda", j)]]
                if len(parts[j]) >= spec.N:
                    for i in parts[j]:
                        owner[i] = agents[("lambda", j)]
                    owner[h_of[(b, j)]] = agents[("chi", j)]
                    free_chi = j
                    break
            if free_chi is None:
                raise CanonicalError(f"agent {b} has value below M; nothing to embed")
        rest = [j for j in range(s + 1) if j != free_chi]
        for j, item in zip(rest, fillers[b]):
            owner[item] = agents[("chi", j)]
        for j in range(1, s + 1):
            if j != free_chi:
                owner[h_of[(b, j)]] = agents[("lambda", j)]
    return Allocation(owner)


def lift_solution(canon_sol: Allocation, back: BackMap, ci: CanonicalInstance,
                  alpha=1) -> Allocation:
    """Map an alpha-approximate canonical allocation back to the original agents."""
    alpha = as_fraction(alpha)
    held: dict[int, list[int]] = {}
    for i, a in canon_sol.owner.items():
        held.setdefault(a, []).append(i)
    owner: dict[int, int] = {}
    origins = sorted({b for b, _, _ in back.roles.values()})
    for b in origins:
        agents = back.agents_of(b)
        filler_holders = set()
        for j in range(back.s + 1):
            a = agents[("chi", j)]
            if any(back.item_origin.get(i, ("", -1, 0))[0] == "Y" for i in held.get(a, [])):
                filler_holders.add(j)
        free = [j for j in range(back.s + 1) if j not in filler_holders]
        if not free:
            raise CanonicalError(f"every heavy agent of origin {b} holds a filler item")
        j = free[0]
        chi = agents[("chi", j)]
        if j == 0:
            big = [i for i in held.get(chi, []) if i < back.n_original and i in ci.heavy[chi]]
            if not big:
                raise CanonicalError(f"heavy agent {chi} of origin {b} is unsatisfied")
            owner[min(big)] = b
            continue
        lam = agents[("lambda", j)]
        spec = ci.light[lam]
        if spec.heavy_item not in held.get(chi, []):
            raise CanonicalError(f"heavy agent {chi} of origin {b} is unsatisfied")
        got = [i for i in held.get(lam, []) if i in spec.light_items]
        if len(got) * alpha < spec.N:
            raise CanonicalError(
                f"light agent {lam} holds {len(got)} light items, needs N/alpha = {spec.N / alpha}")
        for i in got:
            owner[i] = b
    return Allocation(owner)


def validate_canonical(ci: CanonicalInstance) -> list[str]:
    """List every violated canonical-instance invariant (empty when valid)."""
    out = []
    seen: dict[int, int] = {}
    for a, spec in ci.light.items():
        if spec.heavy_item in seen:
            out.append(f"heavy item {spec.heavy_item} shared by light agents "
                       f"{seen[spec.heavy_item]} and {a}")
        seen[spec.heavy_item] = a
        if spec.N <= 0:
            out.append(f"light agent {a} has non-positive N = {spec.N}")
        elif not meets_threshold(spec.N, ci.threshold_n, ci.epsilon):
            out.append(f"light agent {a} has N = {spec.N} below n^eps "
                       f"({ci.threshold_n}^{ci.epsilon})")
        if spec.heavy_item in spec.light_items:
            out.append(f"light agent {a} lists its heavy item {spec.heavy_item} as light")
        for i in [spec.heavy_item, *spec.light_items]:
            if not (0 <= i < ci.n_items):
                out.append(f"light agent {a} refers to item {i} out of range")
    for a, gamma in ci.heavy.items():
        for i in gamma:
            if not (0 <= i < ci.n_items):
                out.append(f"heavy agent {a} refers to item {i} out of range")
    return out


def scale_for_layers(ci: CanonicalInstance, h: int) -> CanonicalInstance:
    """Divide every threshold N by (h + 1), rounding down but keeping it >= 1."""
    if h < 1:
        raise CanonicalError(f"layer count must be at least 1, got {h}")
    light = {a: replace(spec, N=Fraction(max(1, math.floor(spec.N / (h + 1)))))
             for a, spec in ci.light.items()}
    return replace(ci, light=light)


def single_item_allocation(inst: Instance) -> Allocation:
    """Give every agent one wanted item through a maximum bipartite matching."""
    g = FlowGraph()
    for a in range(inst.m):
        g.add_edge("src", ("a", a), 1)
        for i in inst.wanted(a):
            g.add_edge(("a", a), ("i", i), 1)
    for i in range(inst.n):
        g.add_edge(("i", i), "sink", 1)
    g.max_flow("src", "sink")
    owner = {}
    for a in range(inst.m):
        for _, head, f in g.edges_from(("a", a)):
            if f > 0:
                owner[head[1]] = a
    return Allocation(owner)
