"""Turn congested path families into disjoint ones with per-receiver quotas by unit max-flow."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from ..canonical import CanonicalInstance
from ..maxflow import FlowGraph

__all__ = [
    "RescueError",
    "RescueResult",
    "route_quotas",
    "rescue_flow",
    "merge_Q",
    "multiplicity",
    "floor_div",
]

_SRC = ("src",)
_SINK = ("sink",)


class RescueError(RuntimeError):
    pass


@dataclass
class RescueResult:
    paths: list[tuple]
    quotas: dict
    zero_quota: list = field(default_factory=list)

    def incoming(self) -> dict:
        out: dict = {}
        for p in self.paths:
            out[p[-1][1]] = out.get(p[-1][1], 0) + 1
        return out


def floor_div(n, d) -> int:
    q = Fraction(n) / Fraction(d)
    return q.numerator // q.denominator


def multiplicity(paths: Iterable[Sequence]) -> dict:
    """How often each vertex is a first or intermediate vertex."""
    count: dict = {}
    for p in paths:
        for v in p[:-1]:
            count[v] = count.get(v, 0) + 1
    return count


def route_quotas(ci: CanonicalInstance, P: Mapping[int, int], senders: Iterable[int],
                 quotas: Mapping[int, int]) -> list[tuple]:
    """Disjoint paths meeting every receiver quota exactly, or RescueError.

    Free items and senders are fed by the source; items and heavy agents
    have unit vertex capacity; receiver ``A`` drains ``quotas[A]`` units.
    Senders and receivers are separate vertices, so a light agent never
    sits inside a path.
    """
    g = FlowGraph()
    g.node(_SRC)
    g.node(_SINK)
    senders = sorted(set(senders))
    owned = set(P.values())
    for i in range(ci.n_items):
        g.add_edge((("I", i), "in"), (("I", i), "out"), 1)
        if i not in owned:
            g.add_edge(_SRC, (("I", i), "in"), 1)
    for a, gamma in sorted(ci.heavy.items()):
        if a not in P:
            continue  # a terminal cannot pass flow on
        g.add_edge((("A", a), "in"), (("A", a), "out"), 1)
        g.add_edge((("A", a), "out"), (("I", P[a]), "in"), 1)
        for i in sorted(gamma):
            if i != P[a]:
                g.add_edge((("I", i), "out"), (("A", a), "in"), 1)
    for a in senders:
        if a not in P:
            raise RescueError(f"sender {a} has no private item")
        g.add_edge(_SRC, ("send", a), 1)
        g.add_edge(("send", a), (("I", P[a]), "in"), 1)
    need = 0
    for a, q in sorted(quotas.items()):
        if q <= 0:
            continue
        need += q
        for i in sorted(ci.light[a].light_items):
            g.add_edge((("I", i), "out"), ("recv", a), 1)
        g.add_edge(("recv", a), _SINK, q)
    got = g.max_flow(_SRC, _SINK)
    if got < need:
        raise RescueError(f"max-flow routes {got} of the {need} required paths")
    out = []
    for walk in g.decompose(_SRC, _SINK):
        path = []
        for lab in walk[1:-1]:
            if lab[0] in ("send", "recv"):
                v = ("A", lab[1])
            else:
                v = lab[0]
            if not path or path[-1] != v:
                path.append(v)
        out.append(tuple(path))
    return sorted(out)


def rescue_flow(ci: CanonicalInstance, P: Mapping[int, int], paths: Sequence[Sequence],
                receivers: Iterable[int], beta) -> RescueResult:
    """Disjoint paths giving each receiver exactly floor(N / (2 beta)) paths.

    Preconditions checked here: every path ends at a receiver and starts at
    a free item or a receiver, each receiver has at least N/2 incoming paths,
    and no vertex is first or intermediate on more than ``beta`` paths.
    """
    beta = Fraction(beta)
    receivers = sorted(set(receivers))
    rset = set(receivers)
    owned = set(P.values())
    incoming: dict = {a: 0 for a in receivers}
    senders = set()
    for p in paths:
        end = p[-1]
        if end[0] != "A" or end[1] not in rset:
            raise RescueError(f"path {p} does not end at a receiver")
        incoming[end[1]] += 1
        first = p[0]
        if first[0] == "A":
            if first[1] not in rset:
                raise RescueError(f"path {p} starts at {first}, which is not a receiver")
            senders.add(first[1])
        elif first[1] in owned:
            raise RescueError(f"path {p} starts at item {first[1]}, which is not free")
    for a in receivers:
        if incoming[a] < Fraction(ci.light[a].N) / 2:
            raise RescueError(f"receiver {a} has {incoming[a]} paths, below N/2")
    worst = max(multiplicity(paths).values(), default=0)
    if worst > beta:
        raise RescueError(f"a vertex lies on {worst} paths, above beta = {beta}")
    quotas = {a: floor_div(ci.light[a].N, 2 * beta) for a in receivers}
    out = route_quotas(ci, P, senders, quotas)
    return RescueResult(out, quotas, [a for a, q in quotas.items() if q == 0])


def merge_Q(ci: CanonicalInstance, P: Mapping[int, int], p2: Sequence[Sequence], q: Sequence[Sequence],
            receivers: Iterable[int], satisfied: Iterable[int], alpha, alpha_j) -> RescueResult:
    """Combine the new and the carried path families into one disjoint family.

    Receivers get floor(N / (alpha_j + alpha)) paths; every receiver outside
    ``satisfied`` may send one path. Falls short only when the inputs break
    their own guarantees.
    """
    receivers = sorted(set(receivers))
    done = set(satisfied)
    alpha, alpha_j = Fraction(alpha), Fraction(alpha_j)
    for name, fam in (("new", p2), ("carried", q)):
        worst = max(multiplicity(fam).values(), default=0)
        if worst > 1:
            raise RescueError(f"the {name} path family shares an intermediate vertex")
    witness: dict = {}
    for fam, w in ((p2, alpha / (alpha_j + alpha)), (q, alpha_j / (alpha_j + alpha))):
        for p in fam:
            witness[p[-1][1]] = witness.get(p[-1][1], 0) + w
    quotas = {a: floor_div(ci.light[a].N, alpha_j + alpha) for a in receivers}
    for a in receivers:
        if witness.get(a, 0) < quotas[a]:
            raise RescueError(f"receiver {a} has witness flow {witness.get(a, 0)} below its quota {quotas[a]}")
    senders = [a for a in receivers if a not in done]
    out = route_quotas(ci, P, senders, quotas)
    return RescueResult(out, quotas, [a for a, v in quotas.items() if v == 0])
