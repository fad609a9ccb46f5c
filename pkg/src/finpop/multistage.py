"""Multistage fixed-width confidence intervals for a finite population proportion.

Sampling proceeds through a geometric grid of sample sizes ``n_1 < ... < n_s``.
At each stage the exact hypergeometric limits ``L(N, n, k, alpha)`` and
``U(N, n, k, alpha)`` (with ``alpha = zeta * delta``) are formed from the
running count k; sampling stops at the first stage where ``U - L <= 2 eps N``.
The last stage is ``n_max``, where that test passes for every k.

Exact verification
------------------
Given the stopping rule, the number of 0/1 prefixes of length ``n_l`` that
reach stage l without stopping and have ``K_l = k`` does not depend on M.
Those counts ``W_l[k]`` are built once per plan by an integer convolution,
after which::

    P(stop at l, K_l = k | M) = W_l[k] * C(N - n_l, M - k) / C(N, M)

so every per-M quantity is an exact rational with denominator ``C(N, M)``.

Interval reading
----------------
``L`` and ``U`` are the smallest and largest population counts the data
leave plausible, so the literal open interval ``L < p < U`` excludes them
and misses p whenever ``L = M`` (certain at M = 0, likely at M = 1).
``"strict"`` keeps that literal reading together with its miss events
``{L >= M}`` and ``{U <= M}``. ``"closed"`` (the default) covers p when
``L <= p <= U`` and counts the miss events ``{L > M}`` and ``{U < M}``,
which are disjoint, so its coverage is exactly one minus the condition sum.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from . import kernels
from ._constants import AMBIGUITY_BAND
from .errors import CertificationError, ParameterDomainError
from .hypergeom import EvalMode, PopulationSpec, binom, lower_tail, upper_tail
from .montecarlo import prefix_counts

SCHEMA_VERSION = 1
ENDPOINT_RULES = ("closed", "strict")
QUANTIFIERS = ("all", "any")


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha!r}")


def _check_nk(N, n, k):
    for name, v in (("N", N), ("n", n), ("k", k)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParameterDomainError(f"{name} must be an integer")
    if not (0 <= k <= n <= N) or N < 1:
        raise ParameterDomainError(f"need 0 <= k <= n <= N, got N={N}, n={n}, k={k}")


# -- confidence limits ---------------------------------------------------------


def limit_L(N: int, n: int, k: int, alpha: float) -> int:
    """Smallest M with P(K >= k | M) > alpha/2, found by exact integer bisection."""
    _check_nk(N, n, k)
    _check_alpha(alpha)
    thr = Fraction(alpha) / 2
    lo, hi = k - 1, k + N - n  # f(lo) false (tail is 0 below k), f(hi) true
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if upper_tail(N, mid, n, k, EvalMode.EXACT) > thr:
            hi = mid
        else:
            lo = mid
    return hi


def limit_U(N: int, n: int, k: int, alpha: float) -> int:
    """Largest M with P(K <= k | M) > alpha/2, found by exact integer bisection."""
    _check_nk(N, n, k)
    _check_alpha(alpha)
    thr = Fraction(alpha) / 2
    lo, hi = k, k + N - n + 1  # f(lo) true (tail is 1 at M = k), f(hi) false
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if lower_tail(N, mid, n, k, EvalMode.EXACT) > thr:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ConfidenceLimits:
    L_int: int
    U_int: int
    N: int

    @property
    def lower(self) -> float:
        return self.L_int / self.N

    @property
    def upper(self) -> float:
        return self.U_int / self.N


@lru_cache(maxsize=4096)
def _stage_limits_cached(N, n, alpha):
    L, U, amb = kernels.stage_limits(N, n, math.log(alpha / 2.0), AMBIGUITY_BAND)
    L = np.array(L, dtype=np.int64)
    U = np.array(U, dtype=np.int64)
    for k in np.flatnonzero(amb):
        L[k] = limit_L(N, n, int(k), alpha)
        U[k] = limit_U(N, n, int(k), alpha)
    L.setflags(write=False)
    U.setflags(write=False)
    return L, U


def stage_limits(N: int, n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Limits ``(L[k], U[k])`` for every k in 0..n.

    Float tails decide every comparison that clears ``alpha/2`` by a relative
    margin of 1e-8; anything closer is re-decided in exact arithmetic, so the
    result equals the exact limits.
    """
    _check_nk(N, n, 0)
    _check_alpha(alpha)
    return _stage_limits_cached(N, n, float(alpha))


def _width_limit(N, eps):
    # integer pair (a, b) with: U - L <= 2 eps N  <=>  (U - L) * b <= a
    e = Fraction(eps)
    return 2 * e.numerator * N, e.denominator


def width_passes(N: int, eps: float, L, U) -> np.ndarray:
    a, b = _width_limit(N, eps)
    widths = np.asarray(U, dtype=object) - np.asarray(L, dtype=object)
    return np.array([w * b <= a for w in widths], dtype=bool)


def _check_eps(eps):
    if not 0.0 < eps < 0.5:
        raise ParameterDomainError(f"eps must lie in (0, 1/2), got {eps!r}")


def n_max(N: int, alpha: float, eps: float) -> int:
    """Smallest n at which the width test passes for every k in 0..n."""
    _check_eps(eps)
    for n in range(1, N + 1):
        L, U = stage_limits(N, n, alpha)
        if width_passes(N, eps, L, U).all():
            return n
    return N  # unreachable: a census has zero width


def n_min(N: int, alpha: float, eps: float, quantifier: str = "all") -> int:
    """Largest n at which the width test fails for all k (or, with
    ``quantifier="any"``, for at least one k). Returns 0 when no n qualifies.
    """
    _check_eps(eps)
    if quantifier not in QUANTIFIERS:
        raise ParameterDomainError(f"quantifier must be one of {QUANTIFIERS}")
    if quantifier == "all":
        # k = 0 width never grows with n, so nothing at or past n_max qualifies
        best = 0
        for n in range(1, n_max(N, alpha, eps)):
            L, U = stage_limits(N, n, alpha)
            if not width_passes(N, eps, L, U).any():
                best = n
        return best
    for n in range(N, 0, -1):
        L, U = stage_limits(N, n, alpha)
        if not width_passes(N, eps, L, U).all():
            return n
    return 0


# -- stage plans ---------------------------------------------------------------


def _snap(x, rel=1e-9):
    r = round(x)
    return float(r) if abs(x - r) <= rel * max(1.0, abs(x)) else x


def geometric_grid(lo: int, hi: int, rho: float) -> tuple[int, list[int]]:
    """``tau`` and the distinct values of ``ceil((hi/lo)^(i/tau) lo)``, i = 0..tau."""
    ratio = hi / lo
    tau = max(1, math.ceil(_snap(math.log(ratio) / math.log1p(rho), 1e-12)))
    values = {lo, hi}
    for i in range(1, tau):
        values.add(math.ceil(_snap(lo * ratio ** (i / tau))))
    return tau, sorted(values)


@dataclass(frozen=True)
class StagePlan:
    N: int
    eps: float
    delta: float
    zeta: float
    rho: float
    tau: int
    stages: tuple
    n_min: int
    n_max: int
    quantifier: str = "all"
    warnings: tuple = ()

    @property
    def alpha(self) -> float:
        return self.zeta * self.delta

    @property
    def s(self) -> int:
        return len(self.stages)

    def to_dict(self) -> dict:
        return {
            "schema": "finpop/stage-plan",
            "version": SCHEMA_VERSION,
            "N": self.N,
            "eps": self.eps,
            "delta": self.delta,
            "zeta": self.zeta,
            "rho": self.rho,
            "tau": self.tau,
            "stages": list(self.stages),
            "n_min": self.n_min,
            "n_max": self.n_max,
            "quantifier": self.quantifier,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StagePlan":
        if "plan" in doc:
            doc = doc["plan"]
        if doc.get("schema") != "finpop/stage-plan":
            raise ParameterDomainError("not a stage plan document")
        if doc.get("version") != SCHEMA_VERSION:
            raise ParameterDomainError(f"unsupported stage plan version {doc.get('version')!r}")
        plan = cls(
            N=int(doc["N"]),
            eps=float(doc["eps"]),
            delta=float(doc["delta"]),
            zeta=float(doc["zeta"]),
            rho=float(doc["rho"]),
            tau=int(doc["tau"]),
            stages=tuple(int(x) for x in doc["stages"]),
            n_min=int(doc["n_min"]),
            n_max=int(doc["n_max"]),
            quantifier=doc.get("quantifier", "all"),
            warnings=tuple(doc.get("warnings", ())),
        )
        plan.validate()
        return plan

    def validate(self) -> None:
        st = self.stages
        if not st or any(b <= a for a, b in zip(st, st[1:])) or st[0] < 1 or st[-1] > self.N:
            raise ParameterDomainError(f"stages must be strictly ascending within 1..N, got {st}")
        if st[-1] != self.n_max:
            raise ParameterDomainError("last stage must equal n_max")
        _check_eps(self.eps)
        _check_alpha(self.alpha)


def build_stage_plan(
    N: int, eps: float, delta: float, zeta: float, rho: float = 0.5, quantifier: str = "all"
) -> StagePlan:
    _check_eps(eps)
    if not 0.0 < delta < 1.0:
        raise ParameterDomainError("delta must lie in (0, 1)")
    if zeta <= 0 or rho <= 0:
        raise ParameterDomainError("zeta and rho must be positive")
    alpha = zeta * delta
    _check_alpha(alpha)
    hi = n_max(N, alpha, eps)
    lo = n_min(N, alpha, eps, quantifier)
    warnings = []
    if 2 * eps * N < 1:
        warnings.append("2*eps*N < 1: intervals must pin M exactly, plan tends to a census")
    if lo < 1 or lo >= hi:
        warnings.append(f"degenerate grid (n_min={lo}, n_max={hi}); using a single stage")
        return StagePlan(N, eps, delta, zeta, rho, 0, (hi,), lo, hi, quantifier, tuple(warnings))
    tau, stages = geometric_grid(lo, hi, rho)
    return StagePlan(N, eps, delta, zeta, rho, tau, tuple(stages), lo, hi, quantifier, tuple(warnings))


@dataclass(frozen=True)
class DecisionTable:
    n: int
    L: np.ndarray
    U: np.ndarray
    passes: np.ndarray


def decision_tables(plan: StagePlan) -> list[DecisionTable]:
    return list(_decision_tables(plan))


@lru_cache(maxsize=256)
def _decision_tables(plan):
    out = []
    for n in plan.stages:
        L, U = stage_limits(plan.N, n, plan.alpha)
        out.append(DecisionTable(n, L, U, width_passes(plan.N, plan.eps, L, U)))
    if not out[-1].passes.all():
        raise ParameterDomainError("final stage does not stop for every k; plan is invalid")
    return tuple(out)


@lru_cache(maxsize=256)
def _stop_weights(plan):
    """Integer W_l[k] restricted to stopping states, one list per stage."""
    tables = _decision_tables(plan)
    stops = []
    cur = [binom(plan.stages[0], k) for k in range(plan.stages[0] + 1)]
    for ell, tab in enumerate(tables):
        stop = [w if tab.passes[k] else 0 for k, w in enumerate(cur)]
        cont = [0 if tab.passes[k] else w for k, w in enumerate(cur)]
        stops.append(stop)
        if ell == len(tables) - 1:
            break
        d = plan.stages[ell + 1] - tab.n
        step = [binom(d, j) for j in range(d + 1)]
        nxt = [0] * (plan.stages[ell + 1] + 1)
        for k, w in enumerate(cont):
            if w:
                for j, c in enumerate(step):
                    nxt[k + j] += w * c
        cur = nxt
    return tuple(tuple(s) for s in stops)


# -- exact per-M quantities ----------------------------------------------------


@dataclass
class StopTable:
    """Joint law of (stopping stage, K at stop) for one M."""

    M: int
    stages: tuple
    probs: list  # probs[l][k]

    def stage_probs(self):
        return [sum(row) for row in self.probs]

    def total(self):
        return sum(self.stage_probs())


def stopping_distribution(pop: PopulationSpec, plan: StagePlan, mode=EvalMode.EXACT) -> StopTable:
    """Exact (Fractions) or floating joint law of the stopping stage and count.

    The floating path runs the forward recursion with stage-to-stage
    hypergeometric transitions; the exact path uses the M-free prefix counts.
    """
    N, M = pop.N, pop.require_M()
    if N != plan.N:
        raise ParameterDomainError("population size does not match the plan")
    mode = EvalMode.coerce(mode)
    if mode is EvalMode.LOG_SPACE:
        tables = _decision_tables(plan)
        width = plan.stages[-1] + 1
        passes = np.zeros((plan.s, width), dtype=np.bool_)
        for ell, tab in enumerate(tables):
            passes[ell, : tab.n + 1] = tab.passes
        out = kernels.stop_dp_float(N, M, np.asarray(plan.stages, np.int64), passes)
        return StopTable(M, plan.stages, [list(out[ell, : n + 1]) for ell, n in enumerate(plan.stages)])
    denom = math.comb(N, M)
    probs = []
    for n, stop in zip(plan.stages, _stop_weights(plan)):
        probs.append([Fraction(w * binom(N - n, M - k), denom) if w else Fraction(0) for k, w in enumerate(stop)])
    return StopTable(M, plan.stages, probs)


def interval_covers(L, U, M: int, N: int, endpoint_rule: str = "closed"):
    """Does the interval from limits (L, U) cover p = M/N; elementwise on arrays."""
    L = np.asarray(L)
    U = np.asarray(U)
    if endpoint_rule == "strict":
        return (L < M) & (M < U)
    if endpoint_rule == "closed":
        return (L <= M) & (M <= U)
    raise ParameterDomainError(f"endpoint_rule must be one of {ENDPOINT_RULES}")


def _miss_terms(L, U, M, rule):
    # the two events summed in the sufficient condition
    if rule == "strict":
        return L >= M, U <= M
    return L > M, U < M


@dataclass
class MResult:
    M: int
    two_d2: Fraction
    coverage: Fraction
    stage_probs: list
    stop_mass: Fraction


def _evaluate_M(plan, M, rule):
    N = plan.N
    tables = _decision_tables(plan)
    weights = _stop_weights(plan)
    denom = math.comb(N, M)
    miss2d2 = 0
    cover = 0
    stage_num = []
    for tab, stop in zip(tables, weights):
        lo_ev, hi_ev = _miss_terms(tab.L, tab.U, M, rule)
        cov = interval_covers(tab.L, tab.U, M, N, rule)
        total = 0
        for k in range(min(tab.n, M) + 1):
            if not stop[k]:
                continue
            w = stop[k] * binom(N - tab.n, M - k)
            if not w:
                continue
            total += w
            miss2d2 += w * (int(lo_ev[k]) + int(hi_ev[k]))
            if cov[k]:
                cover += w
        stage_num.append(total)
    return MResult(
        M=M,
        two_d2=Fraction(miss2d2, denom),
        coverage=Fraction(cover, denom),
        stage_probs=[Fraction(x, denom) for x in stage_num],
        stop_mass=Fraction(sum(stage_num), denom),
    )


def verify_2D2(pop: PopulationSpec, plan: StagePlan, endpoint_rule: str = "closed") -> Fraction:
    """Exact left-hand side of the sufficient coverage condition at one M.

    Sum over stages of the two miss events of ``endpoint_rule`` jointly with
    stopping at l; the plan is certified when this is below delta for every M.
    """
    if pop.N != plan.N:
        raise ParameterDomainError("population size does not match the plan")
    return _evaluate_M(plan, pop.require_M(), endpoint_rule).two_d2


def exact_coverage(pop: PopulationSpec, plan: StagePlan, endpoint_rule: str = "closed") -> Fraction:
    if pop.N != plan.N:
        raise ParameterDomainError("population size does not match the plan")
    return _evaluate_M(plan, pop.require_M(), endpoint_rule).coverage


def _fmt(x):
    return float(f"{float(x):.12g}")


@dataclass
class CoverageReport:
    plan: StagePlan
    endpoint_rule: str
    per_M: list = field(default_factory=list)

    @property
    def worst_2d2(self) -> Fraction:
        return max(r.two_d2 for r in self.per_M)

    @property
    def worst_2d2_M(self) -> int:
        return max(self.per_M, key=lambda r: r.two_d2).M

    @property
    def worst_coverage(self) -> Fraction:
        return min(r.coverage for r in self.per_M)

    @property
    def worst_coverage_M(self) -> int:
        return min(self.per_M, key=lambda r: r.coverage).M

    @property
    def certified(self) -> bool:
        return self.worst_2d2 < Fraction(self.plan.delta)

    def summary(self) -> dict:
        return {
            "certified": self.certified,
            "endpoint_rule": self.endpoint_rule,
            "zeta": self.plan.zeta,
            "worst_2d2": _fmt(self.worst_2d2),
            "worst_2d2_M": self.worst_2d2_M,
            "worst_coverage": _fmt(self.worst_coverage),
            "worst_coverage_M": self.worst_coverage_M,
        }

    def to_dict(self, fractions: bool = False) -> dict:
        rows = []
        for r in self.per_M:
            row = {
                "M": r.M,
                "two_d2": _fmt(r.two_d2),
                "coverage": _fmt(r.coverage),
                "stage_probs": [_fmt(x) for x in r.stage_probs],
            }
            if fractions:
                row["two_d2_exact"] = f"{r.two_d2.numerator}/{r.two_d2.denominator}"
                row["coverage_exact"] = f"{r.coverage.numerator}/{r.coverage.denominator}"
            rows.append(row)
        return {
            "schema": "finpop/coverage-report",
            "version": SCHEMA_VERSION,
            "summary": self.summary(),
            "per_M": rows,
        }


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("FINPOP_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_chunk(args):
    plan_doc, Ms, rule = args
    plan = StagePlan.from_dict(plan_doc)
    return [_evaluate_M(plan, M, rule) for M in Ms]


def coverage_report(
    plan: StagePlan, endpoint_rule: str = "closed", Ms=None, jobs: Optional[int] = None
) -> CoverageReport:
    """Exact per-M sweep (all M by default), ordered by ascending M."""
    if endpoint_rule not in ENDPOINT_RULES:
        raise ParameterDomainError(f"endpoint_rule must be one of {ENDPOINT_RULES}")
    Ms = sorted(range(plan.N + 1) if Ms is None else set(Ms))
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(Ms) < 2 * jobs:
        rows = [_evaluate_M(plan, M, endpoint_rule) for M in Ms]
    else:
        chunks = [Ms[i::jobs] for i in range(jobs)]
        doc = plan.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_evaluate_chunk, [(doc, c, endpoint_rule) for c in chunks]))
        rows = sorted((r for part in parts for r in part), key=lambda r: r.M)
    return CoverageReport(plan, endpoint_rule, rows)


def tune_zeta(
    N: int,
    eps: float,
    delta: float,
    rho: float = 0.5,
    zeta_hi: float = 1.0,
    zeta_min: float = 1e-6,
    rtol: float = 1.05,
    quantifier: str = "all",
    endpoint_rule: str = "closed",
    jobs: Optional[int] = None,
) -> tuple[StagePlan, CoverageReport]:
    """Find a large tuning factor whose plan is certified for every M.

    Halve zeta from ``zeta_hi`` until a plan certifies, then bisect (on the
    log scale) between the last failure and the first success until their
    ratio is within ``rtol``. Returns the largest certified plan seen.
    """
    if zeta_hi <= 0:
        raise ParameterDomainError("zeta_hi must be positive")
    if zeta_hi * delta >= 1:
        raise ParameterDomainError("zeta_hi * delta must be below 1")

    def attempt(z):
        plan = build_stage_plan(N, eps, delta, z, rho, quantifier)
        return plan, coverage_report(plan, endpoint_rule, jobs=jobs)

    z = zeta_hi
    failed = None
    best = None
    last = None
    while True:
        plan, report = attempt(z)
        if report.certified:
            best = (plan, report)
            break
        failed, last = z, report
        if z <= zeta_min:
            raise CertificationError(
                f"no certified plan down to zeta={zeta_min:g}; worst sufficient-condition value "
                f"{float(last.worst_2d2):.6g} at M={last.worst_2d2_M}",
                worst_value=last.worst_2d2,
                worst_M=last.worst_2d2_M,
            )
        z = max(z / 2.0, zeta_min)
    good = z
    while failed is not None and failed / good > rtol:
        mid = math.sqrt(good * failed)
        plan, report = attempt(mid)
        if report.certified:
            good, best = mid, (plan, report)
        else:
            failed = mid
    return best


# -- simulation ------------------------------------------------------------------


@dataclass(frozen=True)
class RunOutcome:
    stage: int  # 1-based index of the stopping stage
    n_stop: int
    k_stop: int
    limits: ConfidenceLimits


def simulate_stages(
    pop: PopulationSpec, plan: StagePlan, trials: int, seed: int, stream: int = 0, first_trial: int = 0
) -> dict:
    """Vectorised multistage runs; arrays keyed stage, n_stop, k_stop, L, U."""
    if pop.N != plan.N:
        raise ParameterDomainError("population size does not match the plan")
    tables = _decision_tables(plan)
    counts = prefix_counts(pop, plan.stages[-1], trials, seed, stream, first_trial)
    stage = np.full(trials, -1, np.int64)
    k_stop = np.zeros(trials, np.int64)
    for ell, tab in enumerate(tables):
        k = counts[:, tab.n - 1]
        newly = (stage < 0) & tab.passes[k]
        stage[newly] = ell
        k_stop[newly] = k[newly]
    assert (stage >= 0).all(), "final stage must stop every trajectory"
    L = np.empty(trials, np.int64)
    U = np.empty(trials, np.int64)
    for ell, tab in enumerate(tables):
        sel = stage == ell
        L[sel] = tab.L[k_stop[sel]]
        U[sel] = tab.U[k_stop[sel]]
    n_stop = np.asarray(plan.stages, np.int64)[stage]
    return {"stage": stage + 1, "n_stop": n_stop, "k_stop": k_stop, "L": L, "U": U}


def run_multistage(pop: PopulationSpec, plan: StagePlan, seed: int, trial: int = 0) -> RunOutcome:
    """Simulate one staged sampling trajectory and return its interval."""
    out = simulate_stages(pop, plan, 1, seed, first_trial=trial)
    return RunOutcome(
        int(out["stage"][0]),
        int(out["n_stop"][0]),
        int(out["k_stop"][0]),
        ConfidenceLimits(int(out["L"][0]), int(out["U"][0]), plan.N),
    )
