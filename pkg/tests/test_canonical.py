import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from artifact.canonical import (
    CanonicalError,
    CanonicalInstance,
    LightSpec,
    TrivialRegime,
    bucket_count,
    canonicalize,
    embed_solution,
    lift_solution,
    meets_threshold,
    scale_for_layers,
    single_item_allocation,
    validate_canonical,
)
from artifact.generators import gen_random
from artifact.instance import Instance, value
from artifact.oracles import brute_force_opt

EPS = Fraction(1, 4)


def quiet_canonicalize(inst, M, eps=EPS):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return canonicalize(inst, M, eps)


def test_bucket_count_small_targets_are_trivial():
    assert bucket_count(1, 100, Fraction(1, 2)) == 0
    assert bucket_count(6, 4, EPS) <= 0
    assert bucket_count(6, 9, EPS) == 1
    assert bucket_count(6, 17, EPS) == 2


def test_meets_threshold_exact():
    assert meets_threshold(Fraction(2), 4, Fraction(1, 2))
    assert not meets_threshold(Fraction(199, 100), 4, Fraction(1, 2))


def test_trivial_regime_raises():
    inst = Instance(2, 4, {(0, 0): 1, (1, 1): 1})
    with pytest.raises(TrivialRegime):
        quiet_canonicalize(inst, 2)


def test_canonicalize_rejects_unnormalized_utilities():
    inst = Instance(1, 6, {(0, 0): Fraction(1, 2), (0, 1): 12})
    with pytest.raises(CanonicalError, match="below 1"):
        quiet_canonicalize(inst, 12)


@pytest.mark.parametrize("seed", range(6))
def test_canonical_shape(seed):
    inst = gen_random(2, 6, 0.7, 12, seed)
    opt, _ = brute_force_opt(inst)
    try:
        ci, back = quiet_canonicalize(inst, opt)
    except TrivialRegime:
        pytest.skip("target too small for buckets")
    s = back.s
    assert len(ci.agents) == inst.m * (2 * s + 1)
    assert ci.n_items == inst.n + 2 * s * inst.m
    assert validate_canonical(ci) == []
    for a, spec in ci.light.items():
        _, kind, j = back.roles[a]
        assert kind == "lambda" and spec.N == opt / (s * 2 ** j)


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_embed_then_lift_keeps_the_bucket_bound(seed):
    inst = gen_random(2 + seed % 2, 6, 0.7, 12, seed)
    opt, alloc = brute_force_opt(inst)
    if opt == 0:
        return
    try:
        ci, back = quiet_canonicalize(inst, opt)
    except TrivialRegime:
        return
    canon = embed_solution(inst, alloc, ci, back)
    lifted = lift_solution(canon, back, ci, 1)
    bound = min(Fraction(2) ** back.s, opt / (2 * back.s))
    assert value(inst, lifted) >= bound


def test_lift_rejects_underfed_light_agent():
    inst = gen_random(2, 6, 0.7, 12, 0)
    opt, alloc = brute_force_opt(inst)
    ci, back = quiet_canonicalize(inst, opt)
    canon = embed_solution(inst, alloc, ci, back)
    light_owned = [i for i, a in canon.owner.items() if a in ci.light and i in ci.light[a].light_items]
    if not light_owned:
        pytest.skip("embedding used big items only")
    owner = {i: a for i, a in canon.owner.items() if i not in light_owned}
    from artifact.instance import Allocation
    with pytest.raises(CanonicalError):
        lift_solution(Allocation(owner), back, ci, 1)


def test_scale_for_layers():
    ci = CanonicalInstance(6, 4, {0: {0}}, {1: LightSpec(1, Fraction(7), frozenset({2, 3}))})
    sc = scale_for_layers(ci, 2)
    assert sc.light[1].N == 2
    assert scale_for_layers(CanonicalInstance(6, 4, {}, {1: LightSpec(1, Fraction(2), frozenset())}), 3).light[1].N == 1
    with pytest.raises(CanonicalError):
        scale_for_layers(ci, 0)


def test_canonical_instance_rejects_overlap():
    with pytest.raises(CanonicalError):
        CanonicalInstance(2, 3, {0: {0}}, {0: LightSpec(1, Fraction(2), frozenset({2}))})


def test_single_item_allocation_is_a_matching():
    inst = Instance(3, 3, {(0, 0): 1, (1, 0): 1, (1, 1): 1, (2, 1): 1, (2, 2): 1})
    alloc = single_item_allocation(inst)
    assert sorted(alloc.owner.values()) == [0, 1, 2]
