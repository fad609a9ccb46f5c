"""Closed-form large-deviation exponents and tail bounds.

Everything here is plain floating point. The functions double as test oracles
for the exact tail computations in :mod:`finpop.hypergeom`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AdmissibilityError, ParameterDomainError


def _open_unit(name, value):
    if not (0.0 < value < 1.0):
        raise ParameterDomainError(f"{name} must lie in (0, 1), got {value!r}")


@dataclass(frozen=True)
class AbsRelMargins:
    """Absolute margin, relative margin and confidence parameter."""

    eps_a: float
    eps_r: float
    delta: float

    def __post_init__(self):
        _open_unit("eps_a", self.eps_a)
        _open_unit("eps_r", self.eps_r)
        _open_unit("delta", self.delta)
        if self.eps_a / self.eps_r + self.eps_a > 0.5:
            raise AdmissibilityError(
                "margins are not admissible: need eps_a/eps_r + eps_a <= 1/2, "
                f"got {self.eps_a / self.eps_r + self.eps_a:.6g}"
            )


@dataclass(frozen=True)
class RelMargin:
    eps: float
    delta: float

    def __post_init__(self):
        _open_unit("eps", self.eps)
        _open_unit("delta", self.delta)


def g(eps: float, p: float) -> float:
    """Hoeffding exponent for a shift of ``eps`` (signed) away from ``p``.

    ``g(eps, p) = (p+eps) ln(p/(p+eps)) + (1-p-eps) ln((1-p)/(1-p-eps))``,
    written with ``log1p`` so small shifts keep full precision.
    """
    if not (0.0 < p < 1.0):
        raise ParameterDomainError(f"p must lie in (0, 1), got {p!r}")
    if not (0.0 < p + eps < 1.0):
        raise ParameterDomainError(f"p + eps must lie in (0, 1), got {p + eps!r}")
    if eps == 0.0:
        return 0.0
    return -(p + eps) * math.log1p(eps / p) - (1.0 - p - eps) * math.log1p(-eps / (1.0 - p))


def script_M(z: float, p: float) -> float:
    """``ln(p/z) + (1/z - 1) ln((1-p)/(1-z))`` for z, p in (0, 1)."""
    if not (0.0 < z < 1.0) or not (0.0 < p < 1.0):
        raise ParameterDomainError(f"need 0 < z, p < 1, got z={z!r}, p={p!r}")
    return math.log1p((p - z) / z) + (1.0 / z - 1.0) * math.log1p((z - p) / (1.0 - z))


def script_H(z: float, p: float) -> float:
    """``z * script_M(z, p)``; equals ``g(z - p, p)``."""
    return z * script_M(z, p)


def Q(eps: float, r: float) -> float:
    """Failure-probability bound for inverse sampling with threshold ``r``.

    ``(1+eps)^-r exp(eps r/(1+eps)) + (1-eps)^-r exp(-eps r/(1-eps))``;
    strictly decreasing in ``r`` from ``Q(eps, 0) = 2``.
    """
    _open_unit("eps", eps)
    if r < 0:
        raise ParameterDomainError(f"r must be non-negative, got {r!r}")
    up = r * (eps / (1.0 + eps) - math.log1p(eps))
    down = -r * (eps / (1.0 - eps) + math.log1p(-eps))
    return math.exp(up) + math.exp(down)


def q_bracket(eps: float, delta: float) -> tuple[float, float]:
    """Open interval known to contain the root of ``Q(eps, r) = delta``."""
    _open_unit("eps", eps)
    _open_unit("delta", delta)
    plus = (1.0 + eps) * math.log1p(eps) - eps
    minus = (1.0 - eps) * math.log1p(-eps) + eps
    lower = max(
        (1.0 + eps) * math.log(1.0 / delta) / plus,
        (1.0 - eps) * math.log(2.0 / delta) / minus,
    )
    upper = (1.0 + eps) * math.log(2.0 / delta) / plus
    return lower, upper


def _p_of(N, M):
    if N < 1 or not (0 <= M <= N):
        raise ParameterDomainError(f"invalid population N={N}, M={M}")
    return M / N


def hoeffding_upper(N: int, M: int, n: int, eps: float) -> float:
    """Bound on P(k/n >= p + eps), valid for 0 < eps < 1 - p."""
    p = _p_of(N, M)
    if not (0.0 < eps < 1.0 - p) or p <= 0.0:
        raise ParameterDomainError(f"need 0 < eps < 1 - p with 0 < p < 1 (p={p}, eps={eps})")
    return math.exp(n * g(eps, p))


def hoeffding_lower(N: int, M: int, n: int, eps: float) -> float:
    """Bound on P(k/n <= p - eps), valid for 0 < eps < p."""
    p = _p_of(N, M)
    if not (0.0 < eps < p) or p >= 1.0:
        raise ParameterDomainError(f"need 0 < eps < p with 0 < p < 1 (p={p}, eps={eps})")
    return math.exp(n * g(-eps, p))
