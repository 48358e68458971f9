"""General instances through normalization, canonical reduction, the layered solver and lifting."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .canonical import CanonicalInstance, TrivialRegime, canonicalize, lift_solution, single_item_allocation
from .instance import Allocation, Instance, as_fraction, normalize, value
from .layered_lp import Infeasible
from .rounding.driver import SolveResult, solve

__all__ = ["GuessOutcome", "LayeredRun", "achieved_alpha", "canonical_value", "guess_grid", "solve_layered_instance"]


@dataclass
class GuessOutcome:
    M: Fraction
    status: str  # "allocation", "certificate" or "trivial"
    value: Fraction | None = None
    trace: list = field(default_factory=list)


@dataclass
class LayeredRun:
    value: Fraction
    allocation: Allocation
    M: Fraction | None
    guesses: list
    certificate: Infeasible | None = None


def achieved_alpha(ci: CanonicalInstance, alloc: Allocation) -> Fraction:
    """Smallest alpha for which every light agent not holding its heavy item is alpha-satisfied."""
    held: dict = {}
    for i, a in alloc.owner.items():
        held.setdefault(a, set()).add(i)
    worst = Fraction(1)
    for a, spec in ci.light.items():
        mine = held.get(a, set())
        if spec.heavy_item in mine:
            continue
        got = len(mine & spec.light_items)
        if got == 0:
            return Fraction(0)  # unsatisfied at any alpha
        worst = max(worst, spec.N / got)
    return worst


def canonical_value(ci: CanonicalInstance, alloc: Allocation) -> Fraction:
    tot = {a: Fraction(0) for a in ci.agents}
    for i, a in alloc.owner.items():
        if a in tot:
            tot[a] += ci.utility(a, i)
    return min(tot.values(), default=Fraction(0))


def guess_grid(inst: Instance) -> list[Fraction]:
    """Guesses for M from the smallest agent total down by halving."""
    totals = [sum((inst.u(a, i) for i in inst.wanted(a)), Fraction(0)) for a in range(inst.m)]
    top = min(totals)
    if top <= 0:
        return []
    low = min(inst.utilities.values())
    out = []
    M = top
    while M >= low / 2:
        out.append(M)
        M /= 2
    return out


def solve_layered_instance(inst: Instance, epsilon, M=None, seed: int = 0, h: int | None = None,
                           alpha=None, retry_cap: int = 32, on_trace=None, on_model=None) -> LayeredRun:
    """Largest guess whose canonical instance the layered solver satisfies.

    Each guess is normalized and reduced; when the bucket count is not
    positive the single-item matching is used instead. With ``M`` given only
    that guess is tried, and a certificate is returned when the LP rules it
    out.
    """
    eps = as_fraction(epsilon)
    guesses = [as_fraction(M)] if M is not None else guess_grid(inst)
    log = []
    cert = None
    for g in guesses:
        norm = normalize(inst, g)
        try:
            ci, back = canonicalize(norm, norm.n, eps)
        except TrivialRegime:
            alloc = single_item_allocation(norm)
            v = value(inst, alloc)
            log.append(GuessOutcome(g, "trivial", v))
            if v > 0 or M is not None:
                return LayeredRun(v, alloc, g, log)
            continue
        res: SolveResult = solve(ci, eps, seed, h, alpha, retry_cap, on_trace, on_model=on_model)
        if res.certificate is not None:
            cert = res.certificate
            log.append(GuessOutcome(g, "certificate", None, res.trace))
            continue
        alpha_eff = achieved_alpha(ci, res.allocation)
        lifted = lift_solution(res.allocation, back, ci, alpha_eff if alpha_eff > 0 else 1)
        v = value(inst, lifted)
        log.append(GuessOutcome(g, "allocation", v, res.trace))
        return LayeredRun(v, lifted, g, log)
    empty = Allocation({})
    return LayeredRun(value(inst, empty), empty, None, log, cert)
