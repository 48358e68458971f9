from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from artifact.canonical import CanonicalInstance, LightSpec
from artifact.flownet import (
    SOURCE,
    FlowNetError,
    assign_private_items,
    build_network,
    check_alpha_feasible,
    check_good,
    extract_allocation,
    forest_from_allocation,
    forest_paths,
    konig_cover,
    layerize,
    make_private,
)
from artifact.generators import GapLayout, gen_gap_instance, gen_planted_canonical


def toy():
    # light agent 0 (heavy item 0, light items 1, 2), terminal 1 wanting item 0
    ci = CanonicalInstance(2, 3, {1: {0}}, {0: LightSpec(0, Fraction(2), frozenset({1, 2}))}, base_n=1)
    return ci, assign_private_items(ci)


def test_private_assignment_on_toy():
    ci, pa = toy()
    assert pa.P == {0: 0} and pa.T == {1} and pa.S == {1, 2}
    assert check_good(ci, pa) == []


def test_check_good_flags_wrong_light_private():
    ci, _ = toy()
    bad = make_private(ci, {0: 1})
    assert any("expected 0" in d for d in check_good(ci, bad))


@settings(max_examples=30)
@given(st.integers(0, 10**5), st.integers(1, 3))
def test_matching_is_maximum_by_konig(seed, nt):
    ci, _ = gen_planted_canonical(seed, n_terminals=nt, N=3, noise=3)
    pa = assign_private_items(ci)
    agents, items = konig_cover(ci, pa)
    matched = sum(1 for a in pa.P if a in ci.heavy)
    assert len(agents) + len(items) == matched


def test_gap_network_terminal_reached_only_through_starred_agents():
    ci, pa = gen_gap_instance(2)
    lay = GapLayout(2)
    net = build_network(ci, pa)
    heavy, _ = net.reach_without_light()
    assert lay.top not in heavy
    # removing the starred agents cuts every route to the global terminal
    preds = [u for u, vs in net.succ.items() if ("A", lay.top) in vs]
    assert sorted(preds) == sorted(("I", i) for i in lay.h_star)
    for i in lay.h_star:
        assert [u for u, vs in net.succ.items() if ("I", i) in vs] == [("A", lay.star[lay.h_star.index(i)])]


def test_feasible_paths_on_toy():
    ci, pa = toy()
    net = build_network(ci, pa)
    paths = [(("I", 1), ("A", 0)), (("I", 2), ("A", 0)), (("A", 0), ("I", 0), ("A", 1))]
    ok, diag = check_alpha_feasible(net, paths, 1)
    assert ok, diag
    alloc = extract_allocation(ci, pa, paths, alpha=1)
    assert alloc.owner == {0: 1, 1: 0, 2: 0}


def test_alpha_relaxes_the_light_quota():
    ci, pa = toy()
    net = build_network(ci, pa)
    paths = [(("I", 1), ("A", 0)), (("A", 0), ("I", 0), ("A", 1))]
    assert not check_alpha_feasible(net, paths, 1)[0]
    assert check_alpha_feasible(net, paths, 2)[0]


def test_shared_interior_vertex_is_reported():
    ci, pa = toy()
    net = build_network(ci, pa)
    paths = [(("I", 1), ("A", 0)), (("I", 1), ("A", 0)), (("A", 0), ("I", 0), ("A", 1))]
    ok, diag = check_alpha_feasible(net, paths, 1)
    assert not ok and any("interior" in d for d in diag)
    with pytest.raises(FlowNetError):
        extract_allocation(ci, pa, paths, alpha=1)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("depth,h", [(1, 1), (2, 2), (1, 2)])
def test_layerize_invariants(seed, depth, h):
    ci, alloc = gen_planted_canonical(seed, depth=depth)
    pa = assign_private_items(ci)
    forest = forest_from_allocation(ci, pa, alloc)
    try:
        out = layerize(forest, h)
    except FlowNetError:
        pytest.skip("counting bound fails at this size")
    kids = out.children()
    for a, N in out.thresholds.items():
        if a in kids:
            assert len(kids[a]) * (h + 1) >= N
    # every maximal path from a tree root down to a source crosses the same number of light agents
    for root in out.roots():
        depths = set()
        stack = [(root, 0)]
        while stack:
            v, d = stack.pop()
            d += v in out.thresholds
            below = kids.get(v, [])
            if not below:
                assert v in out.sources
                depths.add(d)
            stack.extend((c, d) for c in below)
        assert len(depths) == 1


def test_forest_paths_cut_at_light_agents():
    ci, alloc = gen_planted_canonical(0, depth=1)
    pa = assign_private_items(ci)
    forest = forest_from_allocation(ci, pa, alloc)
    for p in forest_paths(forest):
        assert all(v not in forest.thresholds for v in p[1:-1])
        assert p[0] != SOURCE
