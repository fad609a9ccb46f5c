"""Pure-numpy kernels, vectorised where the numba versions loop.

Same signatures and semantics as ``_kernels_numba``; selected with
``FINPOP_BACKEND=numpy``.
"""

import math

import numpy as np

from ._constants import (
    PHILOX_M0,
    PHILOX_M1,
    PHILOX_ROUNDS,
    PHILOX_W0,
    PHILOX_W1,
    LN_2PI,
    SFE_S0,
    SFE_S1,
    SFE_S2,
    SFE_S3,
    SFE_S4,
    STIRLERR_TABLE,
)


def _stirlerr(n):
    n = np.asarray(n, dtype=float)
    small = n <= 15.0
    idx = np.where(small, n, 0.0).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        nn = n * n
        series = np.where(
            n > 500.0,
            (SFE_S0 - SFE_S1 / nn) / n,
            np.where(
                n > 80.0,
                (SFE_S0 - (SFE_S1 - SFE_S2 / nn) / nn) / n,
                np.where(
                    n > 35.0,
                    (SFE_S0 - (SFE_S1 - (SFE_S2 - SFE_S3 / nn) / nn) / nn) / n,
                    (SFE_S0 - (SFE_S1 - (SFE_S2 - (SFE_S3 - SFE_S4 / nn) / nn) / nn) / nn) / n,
                ),
            ),
        )
    return np.where(small, STIRLERR_TABLE[idx], series)


def _bd0(x, mean):
    x, mean = np.broadcast_arrays(np.asarray(x, float), np.asarray(mean, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = x * np.log(x / mean) + mean - x
        near = np.abs(x - mean) < 0.1 * (x + mean)
        v = np.where(near, (x - mean) / (x + mean), 0.0)
    s = (x - mean) * v
    ej = 2.0 * x * v
    v2 = v * v
    done = ~near
    for j in range(1, 1000):
        if done.all():
            break
        ej = ej * v2
        s1 = s + ej / (2 * j + 1)
        converged = s1 == s
        s = np.where(done, s, s1)
        done = done | converged
    return np.where(near, s, direct)


def _log_dbinom_raw(x, n, p, q):
    x, n, p, q = np.broadcast_arrays(*(np.asarray(a, float) for a in (x, n, p, q)))
    out = np.full(x.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_zero = p == 0.0
        q_zero = (q == 0.0) & ~p_zero
        rest = ~(p_zero | q_zero)
        out[p_zero & (x == 0.0)] = 0.0
        out[q_zero & (x == n)] = 0.0

        x0 = rest & (x == 0.0)
        x0_val = np.where(p < 0.1, -_bd0(n, n * q) - n * p, n * np.log(q))
        out[x0] = np.where(n[x0] == 0.0, 0.0, x0_val[x0])

        xn = rest & (x == n) & (x != 0.0)
        xn_val = np.where(q < 0.1, -_bd0(n, n * p) - n * q, n * np.log(p))
        out[xn] = xn_val[xn]

        mid = rest & (x > 0.0) & (x < n)
        if mid.any():
            xm, nm, pm, qm = x[mid], n[mid], p[mid], q[mid]
            lc = (
                _stirlerr(nm) - _stirlerr(xm) - _stirlerr(nm - xm)
                - _bd0(xm, nm * pm) - _bd0(nm - xm, nm * qm)
            )
            lf = LN_2PI + np.log(xm) + np.log1p(-xm / nm)
            out[mid] = lc - 0.5 * lf
    return out


def log_pmf_vec(N, M, n, k):
    """Elementwise log pmf with broadcasting over all four arguments."""
    N, M, n, k = np.broadcast_arrays(*(np.asarray(a, np.int64) for a in (N, M, n, k)))
    out = np.full(N.shape, -np.inf)
    ok = (k >= np.maximum(0, n - (N - M))) & (k <= np.minimum(n, M))
    zero_n = ok & (n == 0)
    out[zero_n] = 0.0
    rest = ok & (n > 0)
    if rest.any():
        Nf = N[rest].astype(float)
        nr, Mr, kr = n[rest], M[rest], k[rest]
        p = nr / Nf
        q = (N[rest] - nr) / Nf
        out[rest] = (
            _log_dbinom_raw(kr, Mr, p, q)
            + _log_dbinom_raw(nr - kr, N[rest] - Mr, p, q)
            - _log_dbinom_raw(nr, Nf, p, q)
        )
    return out


def log_pmf(N, M, n, k):
    return float(log_pmf_vec(N, M, n, k))


def log_pmf_array(N, M, n, ks):
    return log_pmf_vec(N, M, n, np.asarray(ks, np.int64))


def _logsumexp(a):
    m = np.max(a)
    if m == -np.inf:
        return -np.inf
    return m + math.log(math.fsum(np.exp(a - m)))


def _mode(N, M, n):
    m = ((n + 1) * (M + 1)) // (N + 2)
    return min(max(m, max(0, n - (N - M))), min(n, M))


def log_upper_tail(N, M, n, k):
    lo, hi = max(0, n - (N - M)), min(n, M)
    if k <= lo:
        return 0.0
    if k > hi:
        return -np.inf
    if k > _mode(N, M, n):
        return _logsumexp(log_pmf_vec(N, M, n, np.arange(k, hi + 1)))
    other = _logsumexp(log_pmf_vec(N, M, n, np.arange(lo, k)))
    return math.log1p(-math.exp(other))


def log_lower_tail(N, M, n, k):
    lo, hi = max(0, n - (N - M)), min(n, M)
    if k >= hi:
        return 0.0
    if k < lo:
        return -np.inf
    if k < _mode(N, M, n):
        return _logsumexp(log_pmf_vec(N, M, n, np.arange(lo, k + 1)))
    other = _logsumexp(log_pmf_vec(N, M, n, np.arange(k + 1, hi + 1)))
    return math.log1p(-math.exp(other))


def _row_tails(N, Ms, n, ks, upper):
    """log tails for paired arrays (Ms[j], ks[j]), all at sample size n."""
    i = np.arange(n + 1)
    lp = log_pmf_vec(N, Ms[:, None], n, i[None, :])
    lo = np.maximum(0, n - (N - Ms))
    hi = np.minimum(n, Ms)
    mode = np.clip(((n + 1) * (Ms + 1)) // (N + 2), lo, hi)
    if upper:
        side = i[None, :] >= ks[:, None]
        direct = ks > mode
    else:
        side = i[None, :] <= ks[:, None]
        direct = ks < mode
    sel = np.where(direct[:, None], side, ~side)
    masked = np.where(sel, lp, -np.inf)
    m = masked.max(axis=1)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        lse = safe_m + np.log(np.exp(masked - safe_m[:, None]).sum(axis=1))
        lse = np.where(np.isfinite(m), lse, -np.inf)
        out = np.where(direct, lse, np.log1p(-np.exp(lse)))
    if upper:
        out = np.where(ks <= lo, 0.0, np.where(ks > hi, -np.inf, out))
    else:
        out = np.where(ks >= hi, 0.0, np.where(ks < lo, -np.inf, out))
    return out


def stage_limits(N, n, log_half_alpha, band):
    ks = np.arange(n + 1)
    top = ks + N - n
    amb = np.zeros(n + 1, bool)

    # L: smallest M with upper tail > alpha/2; invariant f(lo) false, f(hi) true
    d = _row_tails(N, ks, n, ks, True) - log_half_alpha
    amb |= np.abs(d) <= band
    found = d > 0.0
    lo, hi = ks.copy(), top.copy()
    hi = np.where(found, ks, hi)
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = (lo + hi) // 2
        d = _row_tails(N, mid, n, ks, True) - log_half_alpha
        amb |= active & (np.abs(d) <= band)
        go_hi = active & (d > 0.0)
        hi = np.where(go_hi, mid, hi)
        lo = np.where(active & ~go_hi, mid, lo)
    L = hi.astype(np.int64)

    # U: largest M with lower tail > alpha/2; invariant f(lo) true, f(hi) false
    d = _row_tails(N, top, n, ks, False) - log_half_alpha
    amb |= np.abs(d) <= band
    found = d > 0.0
    lo, hi = ks.copy(), top.copy()
    lo = np.where(found, top, lo)
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = (lo + hi) // 2
        d = _row_tails(N, mid, n, ks, False) - log_half_alpha
        amb |= active & (np.abs(d) <= band)
        go_lo = active & (d > 0.0)
        lo = np.where(go_lo, mid, lo)
        hi = np.where(active & ~go_lo, mid, hi)
    U = lo.astype(np.int64)
    return L, U, amb


def stop_dp_float(N, M, stages, passes):
    s = len(stages)
    width = stages[-1] + 1
    out = np.zeros((s, width))
    cur = np.zeros(width)
    n1 = stages[0]
    cur[: n1 + 1] = np.exp(log_pmf_vec(N, M, n1, np.arange(n1 + 1)))
    for ell in range(s):
        n = stages[ell]
        stop = passes[ell, : n + 1]
        out[ell, : n + 1] = np.where(stop, cur[: n + 1], 0.0)
        cur[: n + 1] = np.where(stop, 0.0, cur[: n + 1])
        if ell == s - 1:
            break
        d = stages[ell + 1] - n
        ks = np.arange(min(n, M) + 1)
        js = np.arange(d + 1)
        trans = np.exp(log_pmf_vec(N - n, M - ks[:, None], d, js[None, :]))
        nxt = np.zeros(width)
        for j in js:
            nxt[j: j + len(ks)] += cur[: len(ks)] * trans[:, j]
        cur = nxt
    return out


def prefix_sequential(u, N, M):
    T, n = u.shape
    out = np.empty((T, n), np.int64)
    rem_M = np.full(T, M, np.int64)
    k = np.zeros(T, np.int64)
    for i in range(n):
        hit = u[:, i] < rem_M / (N - i)
        k += hit
        rem_M -= hit
        out[:, i] = k
    return out


def prefix_fisher_yates(u, N, M):
    T, n = u.shape
    out = np.empty((T, n), np.int64)
    a = np.zeros((T, N), np.int8)
    a[:, :M] = 1
    rows = np.arange(T)
    k = np.zeros(T, np.int64)
    for i in range(n):
        j = np.minimum(i + (u[:, i] * (N - i)).astype(np.int64), N - 1)
        ai = a[rows, i].copy()
        a[rows, i] = a[rows, j]
        a[rows, j] = ai
        k += a[rows, i]
        out[:, i] = k
    return out


_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def _mulhilo(a, b):
    alo, ahi = a & _LO32, a >> _S32
    blo, bhi = b & _LO32, b >> _S32
    ll = alo * blo
    hl = ahi * blo
    cross = (ll >> _S32) + (hl & _LO32) + alo * bhi
    return ahi * bhi + (hl >> _S32) + (cross >> _S32), a * b


def philox_uniforms(key0, key1, stream, first_trial, T, n):
    blocks = (n + 3) // 4
    shape = (T, blocks)
    x0 = np.broadcast_to(np.arange(1, blocks + 1, dtype=np.uint64), shape).copy()
    x1 = np.zeros(shape, np.uint64)
    x2 = np.full(shape, stream, np.uint64)
    x3 = np.broadcast_to(np.arange(first_trial, first_trial + T, dtype=np.uint64)[:, None], shape).copy()
    k0, k1 = np.uint64(key0), np.uint64(key1)
    with np.errstate(over="ignore"):
        for _ in range(PHILOX_ROUNDS):
            hi0, lo0 = _mulhilo(PHILOX_M0, x0)
            hi1, lo1 = _mulhilo(PHILOX_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
    words = np.stack([x0, x1, x2, x3], axis=-1).reshape(T, blocks * 4)[:, :n]
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
