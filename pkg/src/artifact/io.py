"""JSON documents for instances, canonical instances, weighted graphs and allocations.

Rationals are written as integers when integral and as ``"p/q"`` strings
otherwise; on input any decimal or ``"p/q"`` is accepted and kept exact.
"""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

from .balancing import WeightedGraph
from .canonical import CanonicalInstance, LightSpec
from .instance import Allocation, Instance, InstanceError, as_fraction

__all__ = [
    "ParseError",
    "num_out",
    "instance_to_doc",
    "instance_from_doc",
    "canonical_to_doc",
    "canonical_from_doc",
    "graph_to_doc",
    "graph_from_doc",
    "allocation_to_doc",
    "allocation_from_doc",
    "read_document",
    "read_instance",
    "write_instance",
    "write_document",
    "dumps",
]


class ParseError(InstanceError):
    """Malformed document; the message names the offending field."""


def num_out(x) -> int | str:
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _num(v: Any, where: str) -> Fraction:
    try:
        return as_fraction(v)
    except InstanceError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where}: expected an integer, got {v!r}")
    return v


def _get(doc: dict, key: str, where: str = "document"):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in doc:
        raise ParseError(f"{where}: missing field '{key}'")
    return doc[key]


def instance_to_doc(inst: Instance) -> dict:
    return {
        "kind": "instance",
        "m": inst.m,
        "n": inst.n,
        "utilities": [[a, i, num_out(u)] for (a, i), u in sorted(inst.utilities.items())],
    }


def instance_from_doc(doc: dict) -> Instance:
    m = _int(_get(doc, "m"), "field 'm'")
    n = _int(_get(doc, "n"), "field 'n'")
    rows = _get(doc, "utilities")
    if not isinstance(rows, list):
        raise ParseError("field 'utilities': expected a list of [agent, item, value] triples")
    util = {}
    for k, row in enumerate(rows):
        where = f"utilities[{k}]"
        if not isinstance(row, list) or len(row) != 3:
            raise ParseError(f"{where}: expected [agent, item, value]")
        a, i = _int(row[0], where + " agent"), _int(row[1], where + " item")
        if (a, i) in util:
            raise ParseError(f"{where}: duplicate entry for agent {a}, item {i}")
        util[(a, i)] = _num(row[2], where + " value")
    try:
        return Instance(m, n, util)
    except InstanceError as exc:
        raise ParseError(str(exc)) from None


def canonical_to_doc(ci: CanonicalInstance) -> dict:
    doc = {
        "kind": "canonical",
        "M": num_out(ci.M),
        "n": ci.n_items,
        "epsilon": num_out(ci.epsilon),
        "heavy_agents": {str(a): sorted(g) for a, g in ci.heavy.items()},
        "light_agents": {str(a): {"h": s.heavy_item, "N": num_out(s.N), "S": sorted(s.light_items)}
                         for a, s in ci.light.items()},
    }
    if ci.base_n is not None:
        doc["base_n"] = ci.base_n
    agents = ci.agents
    if agents == list(range(len(agents))):
        inst = ci.to_instance()
        doc["m"] = inst.m
        doc["utilities"] = instance_to_doc(inst)["utilities"]
    return doc


def canonical_from_doc(doc: dict) -> CanonicalInstance:
    M = _num(_get(doc, "M"), "field 'M'")
    n = _int(_get(doc, "n"), "field 'n'")
    heavy = {}
    for key, items in _get(doc, "heavy_agents").items():
        where = f"heavy_agents[{key}]"
        if not isinstance(items, list):
            raise ParseError(f"{where}: expected an item list")
        heavy[_agent_key(key, where)] = frozenset(_int(i, where) for i in items)
    light = {}
    for key, spec in _get(doc, "light_agents").items():
        where = f"light_agents[{key}]"
        h = _int(_get(spec, "h", where), where + ".h")
        N = _num(_get(spec, "N", where), where + ".N")
        S = _get(spec, "S", where)
        if not isinstance(S, list):
            raise ParseError(f"{where}.S: expected an item list")
        light[_agent_key(key, where)] = LightSpec(h, N, frozenset(_int(i, where + ".S") for i in S))
    eps = _num(doc.get("epsilon", "1/2"), "field 'epsilon'")
    base_n = doc.get("base_n")
    if base_n is not None:
        base_n = _int(base_n, "field 'base_n'")
    try:
        return CanonicalInstance(M, n, heavy, light, eps, base_n)
    except InstanceError as exc:
        raise ParseError(str(exc)) from None


def _agent_key(key: str, where: str) -> int:
    try:
        return int(key)
    except ValueError:
        raise ParseError(f"{where}: agent id {key!r} is not an integer") from None


def graph_to_doc(g: WeightedGraph) -> dict:
    doc = {"kind": "graph", "vertices": g.n,
           "edges": [[u, v, num_out(wu), num_out(wv)] for u, v, wu, wv in g.edges]}
    if g.items is not None:
        doc["items"] = list(g.items)
    return doc


def graph_from_doc(doc: dict) -> WeightedGraph:
    n = _int(_get(doc, "vertices"), "field 'vertices'")
    edges = []
    for k, e in enumerate(_get(doc, "edges")):
        where = f"edges[{k}]"
        if not isinstance(e, list) or len(e) != 4:
            raise ParseError(f"{where}: expected [u, v, w_u, w_v]")
        edges.append((_int(e[0], where), _int(e[1], where), _num(e[2], where + " w_u"), _num(e[3], where + " w_v")))
    items = doc.get("items")
    try:
        return WeightedGraph(n, tuple(edges), tuple(items) if items is not None else None)
    except InstanceError as exc:
        raise ParseError(str(exc)) from None


def allocation_to_doc(alloc: Allocation, value=None) -> dict:
    doc: dict = {"kind": "allocation", "owner": [[i, a] for i, a in alloc.owner.items()]}
    if value is not None:
        doc["value"] = num_out(value)
    return doc


def allocation_from_doc(doc: dict) -> tuple[Allocation, Fraction | None]:
    owner: dict = {}
    for k, row in enumerate(_get(doc, "owner")):
        where = f"owner[{k}]"
        if not isinstance(row, list) or len(row) != 2:
            raise ParseError(f"{where}: expected [item, agent]")
        i, a = _int(row[0], where + " item"), _int(row[1], where + " agent")
        if i in owner:
            raise ParseError(f"{where}: item {i} is owned twice (agents {owner[i]} and {a})")
        owner[i] = a
    value = doc.get("value")
    return Allocation(owner), (None if value is None else _num(value, "field 'value'"))


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def read_document(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return doc


def write_document(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_instance(path) -> Instance:
    return instance_from_doc(read_document(path))


def write_instance(path, inst: Instance) -> None:
    write_document(path, instance_to_doc(inst))
