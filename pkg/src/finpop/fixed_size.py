"""Fixed sample size planning under the mixed absolute/relative criterion.

The coverage event for an estimate ``k/n`` of ``p = M/N`` is::

    |k/n - p| < eps_a   or   |k/n - p| < eps_r * p

with strict inequalities. Margins are converted to exact rationals (the
binary value of the float) before any comparison, so ties are decided
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .bounds import AbsRelMargins, g
from .errors import EnumerationCapError, ParameterDomainError
from .hypergeom import PopulationSpec, binom

DEFAULT_ENUMERATION_CAP = 5000


def sample_size_bound(margins: AbsRelMargins) -> float:
    """Real-valued right-hand side the sample size must strictly exceed."""
    ea, er, d = margins.eps_a, margins.eps_r, margins.delta
    denom = (ea + ea * er) * math.log1p(er) + (er - ea - ea * er) * math.log1p(-ea * er / (er - ea))
    return er * math.log(2.0 / d) / denom


def sample_size_bound_via_g(margins: AbsRelMargins) -> float:
    """Same bound written as ``ln(2/delta) / -g(eps_a, eps_a/eps_r)``."""
    return math.log(2.0 / margins.delta) / -g(margins.eps_a, margins.eps_a / margins.eps_r)


def sample_size_formula(margins: AbsRelMargins) -> int:
    """Smallest integer strictly greater than :func:`sample_size_bound`."""
    return math.floor(sample_size_bound(margins)) + 1


def mixed_good_interval(N: int, M: int, n: int, margins: AbsRelMargins) -> tuple[int, int]:
    """Inclusive range of k meeting the mixed criterion (may be empty: lo > hi).

    The two events are intervals centred on ``n p``, so their union is the
    wider one: ``|k - n p| < n * max(eps_a, eps_r p)``.
    """
    p = Fraction(M, N)
    w = max(Fraction(margins.eps_a), Fraction(margins.eps_r) * p)
    centre = n * p
    lo = math.floor(centre - n * w) + 1
    hi = math.ceil(centre + n * w) - 1
    return max(lo, max(0, n - (N - M))), min(hi, min(n, M))


def _good_count(N, M, n, margins):
    lo, hi = mixed_good_interval(N, M, n, margins)
    bad = N - M
    return sum(binom(M, k) * binom(bad, n - k) for k in range(lo, hi + 1))


def _check_n(N, n):
    if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= N:
        raise ParameterDomainError(f"sample size must be an integer in 1..{N}, got {n!r}")


def exact_mixed_coverage(pop: PopulationSpec, n: int, margins: AbsRelMargins) -> Fraction:
    """Exact probability of the mixed criterion for a known ``M``."""
    N, M = pop.N, pop.require_M()
    _check_n(N, n)
    return Fraction(_good_count(N, M, n, margins), math.comb(N, n))


def _beats(count, total, delta):
    # count/total > 1 - delta, in integers
    d = Fraction(delta)
    return count * d.denominator > (d.denominator - d.numerator) * total


def worst_mixed_coverage(N: int, n: int, margins: AbsRelMargins) -> tuple[Fraction, int]:
    """Smallest exact coverage over M = 0..N and the M attaining it."""
    _check_n(N, n)
    total = math.comb(N, n)
    worst, arg = None, None
    for M in range(N + 1):
        c = _good_count(N, M, n, margins)
        if worst is None or c < worst:
            worst, arg = c, M
    return Fraction(worst, total), arg


def _all_M_pass(N, n, margins):
    total = math.comb(N, n)
    for M in range(N + 1):
        if not _beats(_good_count(N, M, n, margins), total, margins.delta):
            return False
    return True


@dataclass
class MinSizeScan:
    n: int
    # sizes above n (inside the widened window) where some M fails
    failures_above: list = field(default_factory=list)


def scan_min_sample_size(
    N: int, margins: AbsRelMargins, cap: int = DEFAULT_ENUMERATION_CAP, widen: int = 0
) -> MinSizeScan:
    """Scan n = 1, 2, ... for the first n whose coverage beats 1 - delta for every M.

    Coverage is not assumed monotone in n. With ``widen > 0`` the next
    ``widen`` sizes are checked as well and any failures are reported.
    """
    if N > cap:
        raise EnumerationCapError(
            f"N={N} exceeds the enumeration cap {cap}; use sample_size_formula instead"
        )
    n_found = N
    for n in range(1, N + 1):
        if _all_M_pass(N, n, margins):
            n_found = n
            break
    failures = [m for m in range(n_found + 1, min(N, n_found + widen) + 1) if not _all_M_pass(N, m, margins)]
    return MinSizeScan(n_found, failures)


def exact_min_sample_size(
    pop: PopulationSpec, margins: AbsRelMargins, cap: int = DEFAULT_ENUMERATION_CAP
) -> int:
    return scan_min_sample_size(pop.N, margins, cap=cap).n


@dataclass
class FixedSizePlan:
    margins: AbsRelMargins
    n_formula: int
    n_bound: float
    population: Optional[PopulationSpec] = None
    n_exact: Optional[int] = None
    failures_above: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def n_used(self) -> int:
        if self.population is None:
            return self.n_formula
        return min(self.n_formula, self.population.N)

    def to_dict(self) -> dict:
        m = self.margins
        out = {
            "schema": "finpop/fixed-size-plan",
            "version": 1,
            "inputs": {"eps_a": m.eps_a, "eps_r": m.eps_r, "delta": m.delta},
            "n_bound": float(f"{self.n_bound:.12g}"),
            "n_formula": self.n_formula,
        }
        if self.population is not None:
            out["inputs"]["N"] = self.population.N
            out["n_used"] = self.n_used
        if self.n_exact is not None:
            out["n_exact"] = self.n_exact
            out["failures_above"] = list(self.failures_above)
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def plan_fixed_size(
    margins: AbsRelMargins,
    population: Optional[PopulationSpec] = None,
    exact: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
    widen: int = 0,
) -> FixedSizePlan:
    plan = FixedSizePlan(margins, sample_size_formula(margins), sample_size_bound(margins), population)
    if population is not None and plan.n_formula > population.N:
        plan.notes.append(
            f"formula size {plan.n_formula} exceeds N={population.N}; a census (n=N) gives p exactly"
        )
    if exact:
        if population is None:
            raise ParameterDomainError("exact minimal size needs a population size")
        scan = scan_min_sample_size(population.N, margins, cap=cap, widen=widen)
        plan.n_exact = scan.n
        plan.failures_above = scan.failures_above
    return plan
