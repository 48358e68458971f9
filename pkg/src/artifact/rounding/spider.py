"""Prefix truncation of two disjoint path families, and rerouting of terminal paths."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

__all__ = ["SpiderError", "SpiderPrefixes", "spider_prefixes", "check_spider", "RerouteResult", "reroute"]


class SpiderError(RuntimeError):
    pass


@dataclass
class SpiderPrefixes:
    """Prefix lengths per path plus the crossing pairs.

    ``pairs`` maps a P index to the Q index whose prefix shares its last
    vertex; every other prefix is its full path and touches nothing.
    """

    P: list[tuple]
    Q: list[tuple]
    gp: list[int]
    gq: list[int]
    pairs: dict = field(default_factory=dict)

    def prefix_p(self, k: int) -> tuple:
        return self.P[k][:self.gp[k]]

    def prefix_q(self, k: int) -> tuple:
        return self.Q[k][:self.gq[k]]


def _check_disjoint(fam: Sequence[tuple], name: str) -> None:
    seen: dict = {}
    for k, p in enumerate(fam):
        if len(set(p)) != len(p):
            raise SpiderError(f"{name} path {k} is not simple")
        for v in p:
            if v in seen:
                raise SpiderError(f"{name} paths {seen[v]} and {k} share vertex {v}")
            seen[v] = k


def spider_prefixes(P: Sequence[Sequence], Q: Sequence[Sequence]) -> SpiderPrefixes:
    """Cut paths so each component is one full path or a P/Q pair meeting at both last vertices.

    P paths walk forward and stop at the first vertex lying on the current
    prefix of some Q path; that Q path is cut there. A Q path cut shorter
    releases the P path it held, which resumes its walk. Q prefixes only
    shrink and P positions only advance, so this terminates.
    """
    P = [tuple(p) for p in P]
    Q = [tuple(q) for q in Q]
    _check_disjoint(P, "P")
    _check_disjoint(Q, "Q")
    where = {v: (k, t) for k, q in enumerate(Q) for t, v in enumerate(q)}
    gq = [len(q) for q in Q]
    holder: dict = {}  # q index -> p index
    stop: dict = {}  # p index -> position of its last vertex
    resume = {k: 0 for k in range(len(P))}
    todo = deque(range(len(P)))
    while todo:
        k = todo.popleft()
        p = P[k]
        hit = None
        for pos in range(resume[k], len(p)):
            w = where.get(p[pos])
            if w is not None and w[1] < gq[w[0]]:
                hit = (pos, w[0], w[1])
                break
        if hit is None:
            stop.pop(k, None)
            continue
        pos, qk, t = hit
        stop[k] = pos
        prev = holder.get(qk)
        gq[qk] = t + 1
        holder[qk] = k
        if prev is not None and prev != k:
            # the released path resumes past its old meeting vertex
            resume[prev] = stop.pop(prev) + 1
            todo.append(prev)
    gp = [stop[k] + 1 if k in stop else len(P[k]) for k in range(len(P))]
    out = SpiderPrefixes(P, Q, gp, gq, {pk: qk for qk, pk in holder.items()})
    check_spider(out)
    return out


def check_spider(sp: SpiderPrefixes) -> None:
    """Independent component scan of the prefix union; raises on a forbidden shape."""
    owners: dict = {}
    pieces = [("P", k, sp.prefix_p(k)) for k in range(len(sp.P))]
    pieces += [("Q", k, sp.prefix_q(k)) for k in range(len(sp.Q))]
    for tag, k, pre in pieces:
        for v in pre:
            owners.setdefault(v, []).append((tag, k))
    adj: dict = {}
    for tag, k, pre in pieces:
        node = (tag, k)
        adj.setdefault(node, set())
        for v in pre:
            for o in owners[v]:
                if o != node:
                    adj[node].add(o)
    seen: set = set()
    for node in sorted(adj):
        if node in seen:
            continue
        comp = {node}
        stack = [node]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        if len(comp) == 1:
            tag, k = node
            full = sp.P[k] if tag == "P" else sp.Q[k]
            pre = sp.prefix_p(k) if tag == "P" else sp.prefix_q(k)
            if pre != full:
                raise SpiderError(f"isolated prefix of {tag} path {k} is not the whole path")
            continue
        tags = sorted(comp)
        if len(comp) != 2 or tags[0][0] == tags[1][0]:
            raise SpiderError(f"component {tags} is neither a single path nor a crossing pair")
        (_, pk), (_, qk) = tags
        a, b = sp.prefix_p(pk), sp.prefix_q(qk)
        common = set(a) & set(b)
        if common != {a[-1]} or a[-1] != b[-1]:
            raise SpiderError(f"P path {pk} and Q path {qk} do not meet only at their last vertex")


@dataclass
class RerouteResult:
    P1: list[tuple]  # rerouted terminal paths, light agent -> ... -> terminal
    Q2: list[tuple]
    removed: dict  # index into the input Q -> terminal responsible for removing it
    kept: list[int]  # indices into the input Q that survive, aligned with Q2


def reroute(P1: Sequence[Sequence], Qstar: Sequence[Sequence], light: set) -> RerouteResult:
    """Rebuild every terminal path so it interferes with at most one path of ``Qstar``.

    Terminal paths are reversed and Q paths get a dummy last vertex before
    the prefixes are computed; the dummies never leave this function.
    """
    P1 = [tuple(p) for p in P1]
    Qstar = [tuple(q) for q in Qstar]
    rev = [p[::-1] for p in P1]
    dummy = [q[:-1] + (("dummy", k, q[-1]),) for k, q in enumerate(Qstar)]
    sp = spider_prefixes(rev, dummy)
    out = []
    removed: dict = {}
    for k, p in enumerate(P1):
        qk = sp.pairs.get(k)
        if qk is None:
            out.append(p)
            continue
        v = sp.prefix_p(k)[-1]
        terminal = p[-1]
        removed[qk] = terminal[1]
        if v[0] == "A" and v[1] in light:
            out.append(p)
            continue
        gq = sp.prefix_q(qk)
        if gq[0][0] != "A" or gq[0][1] not in light:
            raise SpiderError(f"rerouted path would start at {gq[0]}, which is not a light agent")
        newp = gq + sp.prefix_p(k)[::-1][1:]
        if len(set(newp)) != len(newp):
            raise SpiderError("rerouted path is not simple")
        out.append(newp)
    kept = [k for k in range(len(Qstar)) if k not in removed]
    return RerouteResult(out, [Qstar[k] for k in kept], removed, kept)
