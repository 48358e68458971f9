"""Exact rational recovery of float LP points."""
from __future__ import annotations

from fractions import Fraction

__all__ = ["ExactRecoveryError", "exact_solve", "rationalize"]


class ExactRecoveryError(ArithmeticError):
    pass


def rationalize(value: float, max_den: int = 10**6) -> Fraction:
    return Fraction(float(value)).limit_denominator(max_den)


def exact_solve(rows: list[list[Fraction]], rhs: list[Fraction], guess: list[Fraction]) -> list[Fraction]:
    """Solve ``rows @ z = rhs`` exactly; free variables keep their guesses."""
    n = len(guess)
    A = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    z = list(guess)
    free = [c for c in range(n) if c not in pivots]
    for i, c in enumerate(pivots):
        z[c] = A[i][n] - sum(A[i][f] * z[f] for f in free)
    for i in range(r, len(A)):
        if A[i][n] != 0:
            raise ExactRecoveryError("the equality system has no solution on this support")
    return z
