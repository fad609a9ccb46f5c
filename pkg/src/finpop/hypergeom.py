"""Hypergeometric probabilities for sampling without replacement.

Two evaluation modes are available. ``EvalMode.LOG_SPACE`` works in floating
point through saddle-point log densities (the numba/numpy kernels) and is
meant for sweeps at large N. ``EvalMode.EXACT`` returns
:class:`fractions.Fraction` values built from exact integer binomial
coefficients and is the ground truth for verification.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Union

from . import kernels
from ._constants import LOG_UNDERFLOW
from .errors import ParameterDomainError

Probability = Union[float, Fraction]


class EvalMode(enum.Enum):
    LOG_SPACE = "log"
    EXACT = "exact"

    @classmethod
    def coerce(cls, mode) -> "EvalMode":
        if isinstance(mode, cls):
            return mode
        try:
            return cls(str(mode).lower())
        except ValueError:
            raise ParameterDomainError(f"unknown evaluation mode {mode!r}") from None


def _check_int(name, value, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParameterDomainError(f"{name} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ParameterDomainError(f"{name}={value} is below {lo}")
    if hi is not None and value > hi:
        raise ParameterDomainError(f"{name}={value} exceeds {hi}")


@dataclass(frozen=True)
class PopulationSpec:
    """A finite population of ``N`` units, ``M`` of which carry the attribute.

    ``M`` is left as ``None`` in planning contexts where it is unknown.
    """

    N: int
    M: Optional[int] = None

    def __post_init__(self):
        _check_int("N", self.N, lo=1)
        if self.M is not None:
            _check_int("M", self.M, lo=0, hi=self.N)

    @property
    def p(self) -> Fraction:
        if self.M is None:
            raise ParameterDomainError("population proportion needs M")
        return Fraction(self.M, self.N)

    def require_M(self) -> int:
        if self.M is None:
            raise ParameterDomainError("this computation needs a known M")
        return self.M


@dataclass(frozen=True)
class HypergeomParams:
    N: int
    M: int
    n: int

    def __post_init__(self):
        _validate(self.N, self.M, self.n)

    @property
    def support(self) -> tuple[int, int]:
        return max(0, self.n - (self.N - self.M)), min(self.n, self.M)


class TailResult(NamedTuple):
    value: float
    log_value: float
    underflow: bool


def _validate(N, M, n):
    _check_int("N", N, lo=1)
    _check_int("M", M, lo=0, hi=N)
    _check_int("n", n, lo=0, hi=N)


def support(N: int, M: int, n: int) -> tuple[int, int]:
    _validate(N, M, n)
    return max(0, n - (N - M)), min(n, M)


def binom(n: int, k: int) -> int:
    """Exact binomial coefficient; zero outside ``0 <= k <= n``."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def pmf_counts(N: int, M: int, n: int) -> list[int]:
    """Integers ``C(M,k) C(N-M,n-k)`` for ``k = 0..n``.

    Divide by ``C(N, n)`` to get the pmf; keeping the common denominator lets
    callers sum tails in integer arithmetic.
    """
    _validate(N, M, n)
    bad = N - M
    return [binom(M, k) * binom(bad, n - k) for k in range(n + 1)]


def pmf(N: int, M: int, n: int, k: int, mode=EvalMode.LOG_SPACE) -> Probability:
    """P(K = k) for K ~ Hypergeometric(N, M, n); zero off the support."""
    _validate(N, M, n)
    _check_int("k", k)
    mode = EvalMode.coerce(mode)
    if mode is EvalMode.EXACT:
        return Fraction(binom(M, k) * binom(N - M, n - k), math.comb(N, n))
    lp = kernels.log_pmf(N, M, n, k)
    return math.exp(lp) if lp > -math.inf else 0.0


def log_pmf(N: int, M: int, n: int, k: int) -> float:
    _validate(N, M, n)
    _check_int("k", k)
    return float(kernels.log_pmf(N, M, n, k))


def _exact_tail(N, M, n, k_from, k_to):
    lo, hi = max(0, n - (N - M)), min(n, M)
    a, b = max(lo, k_from), min(hi, k_to)
    if a > b:
        return Fraction(0)
    bad = N - M
    num = sum(math.comb(M, i) * math.comb(bad, n - i) for i in range(a, b + 1))
    return Fraction(num, math.comb(N, n))


def _as_result(lv):
    if lv < LOG_UNDERFLOW:
        return TailResult(0.0, lv, True)
    return TailResult(min(1.0, math.exp(lv)), lv, False)


def upper_tail_result(N: int, M: int, n: int, k: int) -> TailResult:
    """Floating upper tail with its log value and underflow flag."""
    _validate(N, M, n)
    _check_int("k", k)
    return _as_result(float(kernels.log_upper_tail(N, M, n, k)))


def lower_tail_result(N: int, M: int, n: int, k: int) -> TailResult:
    _validate(N, M, n)
    _check_int("k", k)
    return _as_result(float(kernels.log_lower_tail(N, M, n, k)))


def upper_tail(N: int, M: int, n: int, k: int, mode=EvalMode.LOG_SPACE) -> Probability:
    """P(K >= k)."""
    mode = EvalMode.coerce(mode)
    if mode is EvalMode.EXACT:
        _validate(N, M, n)
        _check_int("k", k)
        return _exact_tail(N, M, n, k, n)
    return upper_tail_result(N, M, n, k).value


def lower_tail(N: int, M: int, n: int, k: int, mode=EvalMode.LOG_SPACE) -> Probability:
    """P(K <= k)."""
    mode = EvalMode.coerce(mode)
    if mode is EvalMode.EXACT:
        _validate(N, M, n)
        _check_int("k", k)
        return _exact_tail(N, M, n, 0, k)
    return lower_tail_result(N, M, n, k).value


def stage_transition(
    N: int, M: int, n: int, k: int, n_next: int, k_next: int, mode=EvalMode.EXACT
) -> Probability:
    """P(K_{n_next} = k_next | K_n = k).

    The ``n_next - n`` further draws come from the ``N - n`` unseen units, of
    which ``M - k`` carry the attribute.
    """
    _validate(N, M, n)
    _check_int("n_next", n_next, lo=n + 1, hi=N)
    _check_int("k", k, lo=max(0, n - (N - M)), hi=min(n, M))
    _check_int("k_next", k_next)
    mode = EvalMode.coerce(mode)
    return pmf(N - n, M - k, n_next - n, k_next - k, mode)
