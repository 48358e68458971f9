from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from artifact.balancing import (
    BalanceError,
    ConfigLPInfeasible,
    WeightedGraph,
    brute_force_orientation,
    classify_items,
    find_cycle,
    orient,
    solve_balance,
    solve_balance_detailed,
    solve_config_lp,
    to_graph,
    weo_violations,
)
from artifact.generators import gen_restricted
from artifact.instance import Instance, value
from artifact.oracles import brute_force_opt


@st.composite
def weighted_graphs(draw, max_n=6, max_e=9):
    n = draw(st.integers(1, max_n))
    edges = []
    for _ in range(draw(st.integers(0, max_e))):
        u = draw(st.integers(0, n - 1))
        v = draw(st.integers(0, n - 1))
        wu = Fraction(draw(st.integers(0, 12)), draw(st.integers(1, 4)))
        wv = wu if u == v else Fraction(draw(st.integers(0, 12)), draw(st.integers(1, 4)))
        edges.append((u, v, wu, wv))
    return WeightedGraph(n, tuple(edges))


@given(weighted_graphs())
def test_orientation_keeps_half_of_the_non_max_weight(g):
    heads = orient(g)
    assert len(heads) == len(g.edges)
    assert weo_violations(g, heads) == []


def exhaustive(g):
    best = None
    for heads in product(*[(u, v) for u, v, _, _ in g.edges]):
        inw = [Fraction(0)] * g.n
        for k, h in enumerate(heads):
            inw[h] += g.weight(h, k)
        val = min(inw)
        best = val if best is None else max(best, val)
    return best if best is not None else Fraction(0)


@settings(max_examples=60)
@given(weighted_graphs(max_n=5, max_e=7))
def test_backtracking_matches_exhaustive_orientation(g):
    val, heads = brute_force_orientation(g)
    assert val == exhaustive(g)
    inw = [Fraction(0)] * g.n
    for k, h in enumerate(heads):
        inw[h] += g.weight(h, k)
    assert min(inw) == val


def test_find_cycle_on_a_triangle():
    g = WeightedGraph(3, ((0, 1, 3, 1), (1, 2, 3, 1), (2, 0, 3, 1)))
    adj = {v: {k for k, e in enumerate(g.edges) if v in e[:2]} for v in range(3)}
    cyc = find_cycle(g, adj, 0)
    assert sorted(k for k, _ in cyc) == [0, 1, 2]
    heads = [None] * 3
    for k, h in cyc:
        heads[k] = h
    assert weo_violations(g, heads) == []


def test_find_cycle_needs_degree_two():
    g = WeightedGraph(2, ((0, 1, 1, 1),))
    with pytest.raises(BalanceError, match="degree 1"):
        find_cycle(g, {0: {0}, 1: {0}}, 0)


def test_weighted_graph_validation():
    with pytest.raises(BalanceError, match="outside"):
        WeightedGraph(2, ((0, 2, 1, 1),))
    with pytest.raises(BalanceError, match="negative"):
        WeightedGraph(2, ((0, 1, -1, 1),))
    with pytest.raises(BalanceError, match="self-loop"):
        WeightedGraph(2, ((1, 1, 1, 2),))
    assert weo_violations(WeightedGraph(2, ((0, 1, 1, 1),)), [5]) == ["edge 0 has head 5 outside its endpoints"]


def test_three_wanters_are_rejected_by_name():
    inst = Instance(3, 2, {(0, 1): 1, (1, 1): 1, (2, 1): 1, (0, 0): 1})
    with pytest.raises(BalanceError, match="item 1 is wanted by 3 agents"):
        to_graph(inst)


@pytest.mark.parametrize("seed", range(8))
def test_config_lp_is_feasible_at_the_optimum(seed):
    inst = gen_restricted(3, 6, 6, seed)
    opt, _ = brute_force_opt(inst)
    if opt == 0:
        pytest.skip("an agent wants nothing")
    g = to_graph(inst)
    sol = solve_config_lp(g, opt, 0)
    for a in range(g.n):
        assert sum(w for _, w in sol.z[a]) == 1
    cls = classify_items(g, sol)
    for a, ks in cls.integral.items():
        for k in ks:
            u, v, _, _ = g.edges[k]
            assert u == v or sol.item_mass(a, k) == 1
    assert all(g.edges[k][0] != g.edges[k][1] for k in cls.fractional)
    with pytest.raises(ConfigLPInfeasible):
        total = min(sum(g.weight(a, k) for k in g.incident()[a]) for a in range(g.n))
        solve_config_lp(g, total + 1, 0)


def test_config_lp_input_checks():
    g = WeightedGraph(1, ((0, 0, 1, 1),))
    with pytest.raises(BalanceError):
        solve_config_lp(g, 0, Fraction(1, 2))
    with pytest.raises(BalanceError):
        solve_config_lp(g, 1, 1)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([Fraction(1, 2), Fraction(1, 4), Fraction(1, 10)]))
def test_balance_is_within_two_plus_epsilon(seed, eps):
    inst = gen_restricted(2 + seed % 3, 4 + seed % 4, 8, seed)
    opt, _ = brute_force_opt(inst)
    val, alloc = solve_balance(inst, eps)
    assert val == value(inst, alloc)
    assert val * (2 + eps) >= opt


def test_balance_detail_records_the_lp_target():
    inst = gen_restricted(3, 7, 5, 3)
    res = solve_balance_detailed(inst, Fraction(1, 2))
    assert res.lp is not None
    assert res.target == res.M_lp / (1 + Fraction(1, 4))
    assert 2 * res.value >= res.target
