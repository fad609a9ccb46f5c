"""numba kernels. Mirrors ``_kernels_numpy`` function for function."""

import math

import numpy as np
from numba import njit

from ._constants import (
    LN_2PI,
    PHILOX_M0,
    PHILOX_M1,
    PHILOX_ROUNDS,
    PHILOX_W0,
    PHILOX_W1,
    SFE_S0,
    SFE_S1,
    SFE_S2,
    SFE_S3,
    SFE_S4,
    STIRLERR_TABLE,
    TAIL_STOP_REL,
)

_NEG_INF = -np.inf


@njit(cache=True)
def _stirlerr(n):
    if n <= 15.0:
        return STIRLERR_TABLE[int(n)]
    nn = n * n
    if n > 500.0:
        return (SFE_S0 - SFE_S1 / nn) / n
    if n > 80.0:
        return (SFE_S0 - (SFE_S1 - SFE_S2 / nn) / nn) / n
    if n > 35.0:
        return (SFE_S0 - (SFE_S1 - (SFE_S2 - SFE_S3 / nn) / nn) / nn) / n
    return (SFE_S0 - (SFE_S1 - (SFE_S2 - (SFE_S3 - SFE_S4 / nn) / nn) / nn) / nn) / n


@njit(cache=True)
def _bd0(x, mean):
    # x*log(x/mean) + mean - x without cancellation near x == mean
    if abs(x - mean) < 0.1 * (x + mean):
        v = (x - mean) / (x + mean)
        s = (x - mean) * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 1000):
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
    return x * math.log(x / mean) + mean - x


@njit(cache=True)
def _log_dbinom_raw(x, n, p, q):
    if p == 0.0:
        return 0.0 if x == 0.0 else _NEG_INF
    if q == 0.0:
        return 0.0 if x == n else _NEG_INF
    if x == 0.0:
        if n == 0.0:
            return 0.0
        if p < 0.1:
            return -_bd0(n, n * q) - n * p
        return n * math.log(q)
    if x == n:
        if q < 0.1:
            return -_bd0(n, n * p) - n * q
        return n * math.log(p)
    if x < 0.0 or x > n:
        return _NEG_INF
    lc = _stirlerr(n) - _stirlerr(x) - _stirlerr(n - x) - _bd0(x, n * p) - _bd0(n - x, n * q)
    lf = LN_2PI + math.log(x) + math.log1p(-x / n)
    return lc - 0.5 * lf


@njit(cache=True)
def log_pmf(N, M, n, k):
    if k < max(0, n - (N - M)) or k > min(n, M):
        return _NEG_INF
    if n == 0:
        return 0.0
    Nf = float(N)
    p = n / Nf
    q = (N - n) / Nf
    return (
        _log_dbinom_raw(float(k), float(M), p, q)
        + _log_dbinom_raw(float(n - k), float(N - M), p, q)
        - _log_dbinom_raw(float(n), Nf, p, q)
    )


@njit(cache=True)
def log_pmf_array(N, M, n, ks):
    out = np.empty(ks.shape[0])
    for i in range(ks.shape[0]):
        out[i] = log_pmf(N, M, n, ks[i])
    return out


@njit(cache=True)
def _mode(N, M, n):
    m = ((n + 1) * (M + 1)) // (N + 2)
    lo = max(0, n - (N - M))
    hi = min(n, M)
    return min(max(m, lo), hi)


@njit(cache=True)
def _log_sum_outward(N, M, n, start, stop, step):
    # pmf is log-concave, so terms shrink monotonically moving away from the
    # mode; stop once the geometric remainder bound is negligible
    ref = log_pmf(N, M, n, start)
    if ref == _NEG_INF:
        return _NEG_INF
    bad = N - M - n
    s = 0.0
    c = 0.0
    prev = 1.0
    t = 1.0
    i = start
    while True:
        if i != start:
            # consecutive pmf ratio, exact up to rounding
            if step > 0:
                t *= (M - i + 1.0) * (n - i + 1.0) / (i * (bad + i + 0.0))
            else:
                t *= (i + 1.0) * (bad + i + 1.0) / ((M - i + 0.0) * (n - i + 0.0))
        y = s + t
        if abs(s) >= abs(t):
            c += (s - y) + t
        else:
            c += (t - y) + s
        s = y
        if i == stop:
            break
        if i != start:
            r = t / prev
            if r < 1.0 and t * r / (1.0 - r) <= TAIL_STOP_REL * s:
                break
        prev = t
        i += step
    return ref + math.log(s + c)


@njit(cache=True)
def log_upper_tail(N, M, n, k):
    """log P(K >= k)."""
    lo = max(0, n - (N - M))
    hi = min(n, M)
    if k <= lo:
        return 0.0
    if k > hi:
        return _NEG_INF
    if k > _mode(N, M, n):
        return _log_sum_outward(N, M, n, k, hi, 1)
    other = _log_sum_outward(N, M, n, k - 1, lo, -1)
    return math.log1p(-math.exp(other))


@njit(cache=True)
def log_lower_tail(N, M, n, k):
    """log P(K <= k)."""
    lo = max(0, n - (N - M))
    hi = min(n, M)
    if k >= hi:
        return 0.0
    if k < lo:
        return _NEG_INF
    if k < _mode(N, M, n):
        return _log_sum_outward(N, M, n, k, lo, -1)
    other = _log_sum_outward(N, M, n, k + 1, hi, 1)
    return math.log1p(-math.exp(other))


@njit(cache=True)
def stage_limits(N, n, log_half_alpha, band):
    """Confidence limits for every k in 0..n at one sample size.

    Returns ``(L, U, ambiguous)``; ``ambiguous[k]`` marks a comparison that
    landed within ``band`` (log scale) of the threshold and needs an exact
    recheck.
    """
    L = np.empty(n + 1, np.int64)
    U = np.empty(n + 1, np.int64)
    amb = np.zeros(n + 1, np.bool_)
    trusted = False
    for k in range(n + 1):
        top = k + N - n
        # smallest M with P(K >= k | M) > alpha/2; true at M = top
        lo = k
        if trusted and L[k - 1] > lo:
            lo = L[k - 1]
        hi = top
        d = log_upper_tail(N, lo, n, k) - log_half_alpha
        if abs(d) <= band:
            amb[k] = True
        if d > 0.0:
            hi = lo
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                d = log_upper_tail(N, mid, n, k) - log_half_alpha
                if abs(d) <= band:
                    amb[k] = True
                if d > 0.0:
                    hi = mid
                else:
                    lo = mid
        L[k] = hi
        # largest M with P(K <= k | M) > alpha/2; true at M = k
        lo = k
        if trusted and U[k - 1] > lo:
            lo = U[k - 1]
        hi = top
        d = log_lower_tail(N, hi, n, k) - log_half_alpha
        if abs(d) <= band:
            amb[k] = True
        if d > 0.0:
            lo = hi
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                d = log_lower_tail(N, mid, n, k) - log_half_alpha
                if abs(d) <= band:
                    amb[k] = True
                if d > 0.0:
                    lo = mid
                else:
                    hi = mid
        U[k] = lo
        trusted = not amb[k]
    return L, U, amb


@njit(cache=True)
def stop_dp_float(N, M, stages, passes):
    s = stages.shape[0]
    width = stages[s - 1] + 1
    out = np.zeros((s, width))
    cur = np.zeros(width)
    n1 = stages[0]
    for k in range(n1 + 1):
        lp = log_pmf(N, M, n1, k)
        if lp != _NEG_INF:
            cur[k] = math.exp(lp)
    for ell in range(s):
        n = stages[ell]
        for k in range(n + 1):
            if passes[ell, k]:
                out[ell, k] = cur[k]
                cur[k] = 0.0
        if ell == s - 1:
            break
        d = stages[ell + 1] - n
        nxt = np.zeros(width)
        for k in range(min(n, M) + 1):
            if cur[k] == 0.0:
                continue
            for j in range(d + 1):
                lp = log_pmf(N - n, M - k, d, j)
                if lp != _NEG_INF:
                    nxt[k + j] += cur[k] * math.exp(lp)
        cur = nxt
    return out


@njit(cache=True)
def prefix_sequential(u, N, M):
    T, n = u.shape
    out = np.empty((T, n), np.int64)
    for t in range(T):
        rem_M = M
        rem_N = N
        k = 0
        for i in range(n):
            if u[t, i] < rem_M / rem_N:
                k += 1
                rem_M -= 1
            rem_N -= 1
            out[t, i] = k
    return out


@njit(cache=True)
def prefix_fisher_yates(u, N, M):
    T, n = u.shape
    out = np.empty((T, n), np.int64)
    a = np.empty(N, np.int8)
    for t in range(T):
        a[:M] = 1
        a[M:] = 0
        k = 0
        for i in range(n):
            j = i + int(u[t, i] * (N - i))
            if j > N - 1:
                j = N - 1
            tmp = a[i]
            a[i] = a[j]
            a[j] = tmp
            k += a[i]
            out[t, i] = k
    return out


_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mulhilo(a, b):
    alo = a & _LO32
    ahi = a >> _S32
    blo = b & _LO32
    bhi = b >> _S32
    ll = alo * blo
    hl = ahi * blo
    cross = (ll >> _S32) + (hl & _LO32) + alo * bhi
    hi = ahi * bhi + (hl >> _S32) + (cross >> _S32)
    return hi, a * b


@njit(cache=True)
def philox_uniforms(key0, key1, stream, first_trial, T, n):
    """Doubles in [0, 1) matching ``Generator(Philox(key, counter=[0, 0, stream, t])).random(n)``."""
    out = np.empty((T, n))
    c2 = np.uint64(stream)
    for t in range(T):
        c3 = np.uint64(first_trial + t)
        block = np.uint64(0)
        i = 0
        while i < n:
            block += _ONE
            x0 = block
            x1 = np.uint64(0)
            x2 = c2
            x3 = c3
            k0 = np.uint64(key0)
            k1 = np.uint64(key1)
            for _ in range(PHILOX_ROUNDS):
                hi0, lo0 = _mulhilo(PHILOX_M0, x0)
                hi1, lo1 = _mulhilo(PHILOX_M1, x2)
                x0 = hi1 ^ x1 ^ k0
                x1 = lo1
                x2 = hi0 ^ x3 ^ k1
                x3 = lo0
                k0 += PHILOX_W0
                k1 += PHILOX_W1
            for w in (x0, x1, x2, x3):
                if i < n:
                    out[t, i] = (w >> _S11) * _TWO_M53
                    i += 1
    return out
