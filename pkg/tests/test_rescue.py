from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from artifact.canonical import CanonicalInstance, LightSpec
from artifact.flownet import assign_private_items
from artifact.generators import gen_planted_canonical
from artifact.rounding import RescueError, floor_div, merge_Q, multiplicity, rescue_flow, route_quotas


def valid_path(ci, P, path) -> bool:
    for u, v in zip(path, path[1:]):
        if u[0] == "I" and v[0] == "A":
            a, i = v[1], u[1]
            wants = ci.heavy[a] if a in ci.heavy else ci.light[a].light_items
            if i not in wants:
                return False
        elif u[0] == "A" and v[0] == "I":
            if P.get(u[1]) != v[1]:
                return False
        else:
            return False
    return True


def assert_disjoint(paths):
    assert all(c <= 1 for c in multiplicity(paths).values())


def nx_routable(ci, P, senders, quotas) -> int:
    """Maximum number of disjoint paths, computed on a separately built networkx graph."""
    g = nx.DiGraph()
    owned = set(P.values())
    for i in range(ci.n_items):
        g.add_edge(("i", i), ("o", i), capacity=1)
        if i not in owned:
            g.add_edge("S", ("i", i), capacity=1)
    for a, gamma in ci.heavy.items():
        if a not in P:
            continue
        g.add_edge(("ai", a), ("ao", a), capacity=1)
        g.add_edge(("ao", a), ("i", P[a]), capacity=1)
        for i in gamma - {P[a]}:
            g.add_edge(("o", i), ("ai", a), capacity=1)
    for a in senders:
        g.add_edge("S", ("i", P[a]), capacity=1)
    g.add_node("T")
    for a, q in quotas.items():
        if q > 0:
            for i in ci.light[a].light_items:
                g.add_edge(("o", i), ("r", a), capacity=1)
            g.add_edge(("r", a), "T", capacity=q)
    g.add_node("S")
    return nx.maximum_flow_value(g, "S", "T")


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.data())
def test_route_quotas_agrees_with_networkx(seed, data):
    ci, _ = gen_planted_canonical(seed % 500, n_terminals=1 + seed % 2, N=3, noise=2)
    pa = assign_private_items(ci)
    light = sorted(ci.light)
    quotas = {a: data.draw(st.integers(0, 3)) for a in light}
    senders = [a for a in light if a in pa.P and data.draw(st.booleans())]
    need = sum(quotas.values())
    best = nx_routable(ci, pa.P, senders, quotas)
    if best < need:
        with pytest.raises(RescueError):
            route_quotas(ci, pa.P, senders, quotas)
        return
    paths = route_quotas(ci, pa.P, senders, quotas)
    assert_disjoint(paths)
    got: dict = {}
    for p in paths:
        assert valid_path(ci, pa.P, p)
        assert p[0][0] == "I" and p[0][1] not in set(pa.P.values()) or p[0][1] in senders
        got[p[-1][1]] = got.get(p[-1][1], 0) + 1
        # light agents only appear at the ends
        assert all(v[1] not in ci.light for v in p[1:-1] if v[0] == "A")
    assert got == {a: q for a, q in quotas.items() if q > 0}


def congested():
    """Receiver 0 (N = 8) fed by 4 direct free items and 4 paths through heavy agent 1."""
    # items: 0 = h(0), 1 = P(1), 2..5 feed heavy agent 1, 6..9 go to agent 0 directly
    ci = CanonicalInstance(8, 10, {1: frozenset({1, 2, 3, 4, 5})},
                           {0: LightSpec(0, Fraction(8), frozenset({1, 6, 7, 8, 9}))}, base_n=1)
    P = {0: 0, 1: 1}
    paths = [(("I", i), ("A", 1), ("I", 1), ("A", 0)) for i in (2, 3, 4, 5)]
    paths += [(("I", i), ("A", 0)) for i in (6, 7, 8, 9)]
    return ci, P, paths


def test_rescue_quota_is_the_floor_expression():
    ci, P, paths = congested()
    assert max(multiplicity(paths).values()) == 4
    res = rescue_flow(ci, P, paths, [0], beta=4)
    assert res.quotas == {0: floor_div(8, 8)} == {0: 1}
    assert len(res.paths) == 1
    res = rescue_flow(ci, P, paths, [0], beta=Fraction(9, 2))
    assert res.quotas == {0: 0} and res.zero_quota == [0] and res.paths == []


def test_rescue_checks_its_preconditions():
    ci, P, paths = congested()
    with pytest.raises(RescueError, match="above beta"):
        rescue_flow(ci, P, paths, [0], beta=3)
    with pytest.raises(RescueError, match="below N/2"):
        rescue_flow(ci, P, paths[:3], [0], beta=4)
    bad = paths + [(("I", 0), ("A", 0))]
    with pytest.raises(RescueError, match="not free"):
        rescue_flow(ci, P, bad, [0], beta=4)


def test_merge_quota_and_witness():
    ci, P, paths = congested()
    direct = [p for p in paths if len(p) == 2]
    via = [paths[0]]
    # witness 1/4 * 1 + 3/4 * 4 = 13/4 covers the quota floor(8 / 4) = 2
    res = merge_Q(ci, P, via, direct, [0], [0], alpha=1, alpha_j=3)
    assert res.quotas == {0: 2}
    assert_disjoint(res.paths)
    assert len(res.paths) == 2
    # witness 1/2 * 1 + 1/2 * 4 = 5/2 is below the quota floor(8 / 2) = 4
    with pytest.raises(RescueError, match="witness"):
        merge_Q(ci, P, via, direct, [0], [0], alpha=1, alpha_j=1)


def test_merge_rejects_shared_vertices():
    ci, P, paths = congested()
    with pytest.raises(RescueError, match="new path family"):
        merge_Q(ci, P, paths, [], [0], [0], alpha=1, alpha_j=1)


def test_floor_div_is_exact():
    assert floor_div(7, Fraction(7, 2)) == 2
    assert floor_div(Fraction(15, 2), 2) == 3
    assert floor_div(3, 4) == 0
