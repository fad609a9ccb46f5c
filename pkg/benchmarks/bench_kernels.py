"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case runs once untimed (numba compiles or loads its cache there), then
``--repeat`` times; the median wall time is reported. Outputs of the two
backends are compared before timing so a fast wrong kernel cannot win.
"""

import argparse
import json
import statistics
import time

import numpy as np

from finpop import _kernels_numba as nb
from finpop import _kernels_numpy as npk


def _tails(K, N, M, n):
    out = np.empty(n + 1)
    for k in range(n + 1):
        out[k] = K.log_upper_tail(N, M, n, k)
    return out


def _passes_for(N, stages, eps, log_half_alpha, band):
    width = stages[-1] + 1
    passes = np.zeros((len(stages), width), dtype=np.bool_)
    for i, n in enumerate(stages):
        L, U, _ = nb.stage_limits(N, int(n), log_half_alpha, band)
        passes[i, : n + 1] = (U - L) <= 2 * eps * N
    passes[-1, :] = True
    return passes


def cases():
    u_fy = np.random.default_rng(1).random((4096, 200))
    u_seq = np.random.default_rng(2).random((4096, 200))
    stages = np.array([12, 18, 27, 39, 57], dtype=np.int64)
    passes = _passes_for(200, stages, 0.1, np.log(0.0458), 1e-8)
    return [
        ("log_pmf_array N=5000 n=2500", lambda K: K.log_pmf_array(5000, 1700, 2500, np.arange(2501, dtype=np.int64))),
        ("upper tails N=2000 n=800", lambda K: _tails(K, 2000, 700, 800)),
        ("stage_limits N=1000 n=300", lambda K: K.stage_limits(1000, 300, np.log(0.025), 1e-8)[:2]),
        ("stage_limits N=200 n=57", lambda K: K.stage_limits(200, 57, np.log(0.0458), 1e-8)[:2]),
        ("stop_dp N=200 5 stages", lambda K: K.stop_dp_float(200, 80, stages, passes)),
        ("fisher-yates 4096x200 N=5000", lambda K: K.prefix_fisher_yates(u_fy, 5000, 2000)),
        ("sequential 4096x200 N=2e5", lambda K: K.prefix_sequential(u_seq, 200_000, 70_000)),
        ("philox 4096x200", lambda K: K.philox_uniforms(np.uint64(7), np.uint64(0), 0, 0, 4096, 200)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        return np.allclose(a, b, rtol=1e-10, atol=1e-300, equal_nan=True)
    return np.array_equal(a, b)


def timeit(fn, repeat):
    fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    rows = []
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, run in cases():
        if not _same(run(nb), run(npk)):
            raise SystemExit(f"backends disagree on {name}")
        t_nb = timeit(lambda: run(nb), args.repeat)
        t_np = timeit(lambda: run(npk), args.repeat)
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb})
        print(f"{name:34s} {t_nb * 1e3:10.3f} {t_np * 1e3:10.3f} {t_np / t_nb:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
