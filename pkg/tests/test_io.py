import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from artifact.generators import gen_gap_instance, gen_hardness_instance
from artifact.instance import Allocation, Instance
from artifact.io import (
    ParseError,
    allocation_from_doc,
    allocation_to_doc,
    canonical_from_doc,
    canonical_to_doc,
    graph_from_doc,
    graph_to_doc,
    instance_from_doc,
    read_instance,
    write_instance,
)


@st.composite
def instances(draw):
    m = draw(st.integers(1, 4))
    n = draw(st.integers(1, 6))
    util = {}
    for a in range(m):
        for i in range(n):
            if draw(st.booleans()):
                util[(a, i)] = Fraction(draw(st.integers(1, 50)), draw(st.integers(1, 7)))
    return Instance(m, n, util)


@given(instances())
def test_instance_round_trip(tmp_path_factory, inst):
    path = tmp_path_factory.mktemp("io") / "inst.json"
    write_instance(path, inst)
    assert read_instance(path) == inst


def test_rationals_survive_exactly(tmp_path):
    inst = Instance(1, 2, {(0, 0): Fraction(1, 3), (0, 1): 2})
    path = tmp_path / "x.json"
    write_instance(path, inst)
    raw = json.loads(path.read_text())
    assert [0, 0, "1/3"] in raw["utilities"]
    assert read_instance(path).u(0, 0) == Fraction(1, 3)


def test_malformed_value_names_the_field():
    doc = {"m": 1, "n": 1, "utilities": [[0, 0, "abc"]]}
    with pytest.raises(ParseError, match=r"utilities\[0\] value"):
        instance_from_doc(doc)
    with pytest.raises(ParseError, match="field 'n'"):
        instance_from_doc({"m": 1, "n": "two", "utilities": []})
    with pytest.raises(ParseError, match="missing field 'utilities'"):
        instance_from_doc({"m": 1, "n": 1})


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"m": 1,\n "n": }')
    with pytest.raises(ParseError, match="line 2"):
        read_instance(path)


def test_canonical_round_trip():
    ci, _ = gen_gap_instance(2)
    doc = json.loads(json.dumps(canonical_to_doc(ci)))
    assert canonical_from_doc(doc) == ci
    assert doc["n"] == ci.n_items and "utilities" in doc


def test_graph_round_trip():
    g = gen_hardness_instance([(1, 2, 3), (-1, -2, -3)])
    doc = json.loads(json.dumps(graph_to_doc(g)))
    assert graph_from_doc(doc) == g


def test_allocation_duplicate_item_is_named():
    with pytest.raises(ParseError, match="item 3 is owned twice"):
        allocation_from_doc({"owner": [[3, 0], [3, 1]]})
    alloc, v = allocation_from_doc(allocation_to_doc(Allocation({1: 0}), Fraction(5, 2)))
    assert alloc.owner == {1: 0} and v == Fraction(5, 2)
