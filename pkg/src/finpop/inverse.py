"""Inverse sampling: draw until ``r`` successes appear or the population runs out.

The estimate is ``k/n`` at termination. This module picks the threshold
``r`` and checks it exactly through the law of the stopping sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .bounds import Q, RelMargin, q_bracket
from .errors import ParameterDomainError
from .hypergeom import EvalMode, PopulationSpec, pmf
from .montecarlo import draw_sequence


def threshold_bound(margin: RelMargin) -> float:
    eps = margin.eps
    return (1.0 + eps) * math.log(2.0 / margin.delta) / ((1.0 + eps) * math.log1p(eps) - eps)


def threshold_formula(margin: RelMargin) -> int:
    """Smallest integer strictly above :func:`threshold_bound`."""
    return math.floor(threshold_bound(margin)) + 1


def solve_r_star(margin: RelMargin, tol: float = 1e-9, max_iter: int = 500) -> float:
    """Real root of ``Q(eps, r) = delta`` by bisection on the known bracket."""
    if not tol > 0:
        raise ParameterDomainError("tol must be positive")
    lo, hi = q_bracket(margin.eps, margin.delta)
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = Q(margin.eps, mid) - margin.delta
        if abs(val) <= tol:
            break
        if val > 0:
            lo = mid
        else:
            hi = mid
    return mid


def smallest_integer_threshold(margin: RelMargin, r_star: float = None) -> int:
    """Smallest integer r with ``Q(eps, r) <= delta``."""
    if r_star is None:
        r_star = solve_r_star(margin)
    r = max(1, math.ceil(r_star))
    while r > 1 and Q(margin.eps, r - 1) <= margin.delta:
        r -= 1
    while Q(margin.eps, r) > margin.delta:
        r += 1
    return r


@dataclass(frozen=True)
class InversePlan:
    margin: RelMargin
    r_formula: int
    r_bound: float
    r_star: float
    r_exact_int: int
    bracket: tuple

    def to_dict(self, diagnostics: bool = False) -> dict:
        out = {
            "schema": "finpop/inverse-plan",
            "version": 1,
            "inputs": {"eps": self.margin.eps, "delta": self.margin.delta},
            "r_bound": float(f"{self.r_bound:.12g}"),
            "r_formula": self.r_formula,
            "r_star": float(f"{self.r_star:.12g}"),
            "r_exact_int": self.r_exact_int,
        }
        if diagnostics:
            eps = self.margin.eps
            out["bracket"] = [float(f"{b:.12g}") for b in self.bracket]
            out["Q_at_r_star"] = float(f"{Q(eps, self.r_star):.12g}")
            out["Q_at_r_formula"] = float(f"{Q(eps, self.r_formula):.12g}")
            out["Q_at_r_exact_int"] = float(f"{Q(eps, self.r_exact_int):.12g}")
        return out


def plan_inverse(margin: RelMargin, tol: float = 1e-9) -> InversePlan:
    r_star = solve_r_star(margin, tol)
    return InversePlan(
        margin=margin,
        r_formula=threshold_formula(margin),
        r_bound=threshold_bound(margin),
        r_star=r_star,
        r_exact_int=smallest_integer_threshold(margin, r_star),
        bracket=q_bracket(margin.eps, margin.delta),
    )


@dataclass(frozen=True)
class InverseOutcome:
    n_stop: int
    k_stop: int

    @property
    def p_tilde(self) -> Fraction:
        return Fraction(self.k_stop, self.n_stop)


@dataclass(frozen=True)
class StoppingLaw:
    """P(n = m) for m = r..N plus the atom for running out before r successes."""

    N: int
    M: int
    r: int
    probs: dict
    exhaustion: Union[Fraction, float]

    def total(self):
        return sum(self.probs.values()) + self.exhaustion


def _check_r(r):
    if isinstance(r, bool) or not isinstance(r, int) or r < 1:
        raise ParameterDomainError(f"threshold r must be a positive integer, got {r!r}")


def stopping_law(pop: PopulationSpec, r: int, mode=EvalMode.EXACT) -> StoppingLaw:
    """Law of the stopping sample size.

    For M >= r the r-th success sits at position m with probability
    ``P(K_{m-1} = r-1) * (M-r+1)/(N-m+1)``; for M < r sampling always
    exhausts the population.
    """
    _check_r(r)
    N, M = pop.N, pop.require_M()
    mode = EvalMode.coerce(mode)
    exact = mode is EvalMode.EXACT
    zero = Fraction(0) if exact else 0.0
    if M < r:
        return StoppingLaw(N, M, r, {}, Fraction(1) if exact else 1.0)
    probs = {}
    for m in range(r, N - (M - r) + 1):
        head = pmf(N, M, m - 1, r - 1, mode)
        if exact:
            probs[m] = head * Fraction(M - r + 1, N - m + 1)
        else:
            probs[m] = head * (M - r + 1) / (N - m + 1)
    return StoppingLaw(N, M, r, probs, zero)


def relerr_covered(N: int, M: int, n_stop: int, k_stop: int, eps: float) -> bool:
    """Does ``k/n`` land strictly within ``eps * p`` of ``p = M/N``?

    An estimate equal to p counts as covered, which decides the p = 0 case.
    """
    lhs = abs(k_stop * N - n_stop * M)
    if lhs == 0:
        return True
    e = Fraction(eps)
    # |k/n - M/N| < eps M/N  <=>  |kN - nM| < eps M n
    return lhs * e.denominator < e.numerator * M * n_stop


def exact_relerr_coverage(pop: PopulationSpec, r: int, margin: RelMargin) -> Fraction:
    """Exact P(|k/n - p| < eps p) under inverse sampling with threshold r."""
    _check_r(r)
    N, M = pop.N, pop.require_M()
    if M < r or M == N or r == N:
        # estimate equals p exactly: exhaustion, all-attribute population, or census
        return Fraction(1)
    law = stopping_law(pop, r, EvalMode.EXACT)
    assert law.exhaustion == 0, "threshold must be reached before exhaustion when M >= r"
    return sum(
        (prob for m, prob in law.probs.items() if relerr_covered(N, M, m, r, margin.eps)),
        Fraction(0),
    )


def exact_relerr_failure(pop: PopulationSpec, r: int, margin: RelMargin) -> Fraction:
    return 1 - exact_relerr_coverage(pop, r, margin)


def worst_relerr_coverage(N: int, r: int, margin: RelMargin) -> tuple[Fraction, int]:
    worst, arg = None, None
    for M in range(N + 1):
        c = exact_relerr_coverage(PopulationSpec(N, M), r, margin)
        if worst is None or c < worst:
            worst, arg = c, M
    return worst, arg


def simulate_inverse(pop: PopulationSpec, r: int, seed: int, trial: int = 0) -> InverseOutcome:
    """One inverse-sampling trajectory, reproducible from ``(seed, trial)``."""
    _check_r(r)
    k = n = 0
    for x in draw_sequence(pop, seed, trial):
        n += 1
        k += x
        if k == r:
            break
    return InverseOutcome(n, k)
