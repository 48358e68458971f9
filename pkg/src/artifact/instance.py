"""Core data model for Max-Min allocation instances.

An instance has ``m`` agents and ``n`` items with a sparse table of
non-negative rational utilities. An allocation maps items to owners and is
scored by the poorest agent's total utility.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "Instance",
    "Allocation",
    "InstanceError",
    "as_fraction",
    "value",
    "agent_utilities",
    "normalize",
]


class InstanceError(ValueError):
    """Raised for malformed instances or allocations."""


def as_fraction(x) -> Fraction:
    """Parse an int, float, decimal string or ``"p/q"`` string exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InstanceError(f"boolean is not a number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        # repr gives the shortest decimal that round-trips
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InstanceError(f"not a rational number: {x!r}") from exc
    raise InstanceError(f"not a rational number: {x!r}")


@dataclass(frozen=True)
class Instance:
    m: int
    n: int
    utilities: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InstanceError("need at least one agent and one item")
        clean: dict[tuple[int, int], Fraction] = {}
        for (a, i), u in self.utilities.items():
            if not (0 <= a < self.m):
                raise InstanceError(f"agent id {a} out of range [0, {self.m})")
            if not (0 <= i < self.n):
                raise InstanceError(f"item id {i} out of range [0, {self.n})")
            u = as_fraction(u)
            if u < 0:
                raise InstanceError(f"negative utility {u} for agent {a}, item {i}")
            if u:
                clean[(a, i)] = u
        object.__setattr__(self, "utilities", clean)

    def u(self, agent: int, item: int) -> Fraction:
        return self.utilities.get((agent, item), Fraction(0))

    def wanters(self, item: int) -> list[int]:
        """Agents with positive utility for ``item``, sorted by id."""
        return sorted(a for (a, i) in self.utilities if i == item)

    def wanted(self, agent: int) -> list[int]:
        return sorted(i for (a, i) in self.utilities if a == agent)

    def by_item(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for a, i in sorted(self.utilities):
            out[i].append(a)
        return out

    def restrict_items(self, keep: Iterable[int]) -> "Instance":
        keep = set(keep)
        return Instance(self.m, self.n,
                        {k: u for k, u in self.utilities.items() if k[1] in keep})


@dataclass(frozen=True)
class Allocation:
    """Partial map item -> owning agent."""

    owner: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "owner", dict(sorted(self.owner.items())))

    def bundle(self, agent: int) -> list[int]:
        return [i for i, a in self.owner.items() if a == agent]

    def bundles(self, m: int) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(m)]
        for i, a in self.owner.items():
            out[a].append(i)
        return out


def _check_alloc(inst: Instance, alloc: Allocation) -> None:
    for i, a in alloc.owner.items():
        if not (0 <= i < inst.n):
            raise InstanceError(f"item id {i} out of range [0, {inst.n})")
        if not (0 <= a < inst.m):
            raise InstanceError(f"agent id {a} out of range [0, {inst.m})")


def agent_utilities(inst: Instance, alloc: Allocation) -> list[Fraction]:
    _check_alloc(inst, alloc)
    tot = [Fraction(0)] * inst.m
    for i, a in alloc.owner.items():
        tot[a] += inst.u(a, i)
    return tot


def value(inst: Instance, alloc: Allocation) -> Fraction:
    """Minimum total utility over all agents.

    >>> inst = Instance(2, 2, {(0, 0): 4, (0, 1): 1, (1, 0): 1, (1, 1): 4})
    >>> value(inst, Allocation({0: 0, 1: 1}))
    Fraction(4, 1)
    """
    return min(agent_utilities(inst, alloc))


def normalize(inst: Instance, M) -> Instance:
    """Rescale so that every surviving utility lies in ``[1, 2n]``.

    Utilities below ``M/(2n)`` are dropped; the rest are multiplied by
    ``2n/M``. If the optimum was at least ``M`` it becomes at least ``n``.
    """
    M = as_fraction(M)
    if M <= 0:
        raise InstanceError(f"guessed value must be positive, got {M}")
    scale = Fraction(2 * inst.n) / M
    floor = M / (2 * inst.n)
    out = {}
    for k, u in inst.utilities.items():
        if u >= floor:
            # cap at 2n: utilities above M are as good as M
            out[k] = min(u * scale, Fraction(2 * inst.n))
    return Instance(inst.m, inst.n, out)
