"""Integer maximum flow (Dinic) on small directed graphs.

Vertices are arbitrary hashable labels. Used for degree-constrained
matching feasibility and for the senders/receivers path rescue.
"""
from __future__ import annotations

from collections import deque
from typing import Hashable

__all__ = ["FlowGraph"]


class FlowGraph:
    def __init__(self):
        self._index: dict[Hashable, int] = {}
        self.labels: list[Hashable] = []
        # edge arrays: head, capacity, flow; reverse edge is idx ^ 1
        self._to: list[int] = []
        self._cap: list[int] = []
        self._flow: list[int] = []
        self._adj: list[list[int]] = []

    def node(self, label: Hashable) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self.labels)
            self._index[label] = idx
            self.labels.append(label)
            self._adj.append([])
        return idx

    def add_edge(self, u: Hashable, v: Hashable, cap: int) -> int:
        """Add a directed edge and return its id."""
        a, b = self.node(u), self.node(v)
        eid = len(self._to)
        self._to += [b, a]
        self._cap += [cap, 0]
        self._flow += [0, 0]
        self._adj[a].append(eid)
        self._adj[b].append(eid + 1)
        return eid

    def _bfs(self, s: int, t: int) -> list[int] | None:
        level = [-1] * len(self.labels)
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self._adj[u]:
                v = self._to[e]
                if level[v] < 0 and self._cap[e] - self._flow[e] > 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def _dfs(self, u: int, t: int, pushed: int, level, it) -> int:
        if u == t:
            return pushed
        adj = self._adj[u]
        while it[u] < len(adj):
            e = adj[it[u]]
            v = self._to[e]
            room = self._cap[e] - self._flow[e]
            if room > 0 and level[v] == level[u] + 1:
                got = self._dfs(v, t, min(pushed, room), level, it)
                if got:
                    self._flow[e] += got
                    self._flow[e ^ 1] -= got
                    return got
            it[u] += 1
        return 0

    def max_flow(self, source: Hashable, sink: Hashable) -> int:
        s, t = self.node(source), self.node(sink)
        total = 0
        while True:
            level = self._bfs(s, t)
            if level is None:
                return total
            it = [0] * len(self.labels)
            while True:
                got = self._dfs(s, t, 1 << 60, level, it)
                if not got:
                    break
                total += got

    def flow_on(self, eid: int) -> int:
        return self._flow[eid]

    def edges_from(self, label: Hashable):
        """Yield (edge id, head label, flow) for forward edges leaving ``label``."""
        for e in self._adj[self._index[label]]:
            if e % 2 == 0:
                yield e, self.labels[self._to[e]], self._flow[e]

    def decompose(self, source: Hashable, sink: Hashable) -> list[list[Hashable]]:
        """Split the current integral flow into unit source-sink walks.

        Cycles carrying flow are left untouched. Labels on each walk exclude
        nothing; callers strip the source and sink themselves.
        """
        s, t = self._index[source], self._index[sink]
        residual = {e: self._flow[e] for e in range(0, len(self._to), 2) if self._flow[e] > 0}
        out_edges: dict[int, list[int]] = {}
        for e in sorted(residual):
            out_edges.setdefault(self._to[e ^ 1], []).append(e)
        walks = []
        while True:
            path = [s]
            u = s
            while u != t:
                nxt = None
                for e in out_edges.get(u, []):
                    if residual[e] > 0:
                        nxt = e
                        break
                if nxt is None:
                    break
                residual[nxt] -= 1
                u = self._to[nxt]
                path.append(u)
            if u != t:
                break
            walks.append([self.labels[v] for v in path])
        return walks
