"""Seeded Monte Carlo engine for sampling without replacement.

Random streams
--------------
Every trial owns an independent Philox4x64-10 stream (numpy's
``np.random.Philox``) keyed by the user seed, with the 256-bit counter set to
``[0, 0, stream, trial]``. A trial therefore draws the same uniforms no matter
how trials are chunked, ordered or spread across workers. Each draw consumes
exactly one double from ``Generator.random``; the batch path regenerates the
same doubles with a compiled Philox kernel instead of building a Generator per
trial.

Draws map to units either by a partial Fisher-Yates shuffle of the 0/1
population (N <= 100000) or by sequential conditional draws, where unit i
carries the attribute when ``u_i < remaining_M / remaining_N``. Both give the
exchangeable law of draws without replacement.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional

import numpy as np

from . import kernels
from .hypergeom import PopulationSpec

FISHER_YATES_MAX_N = 100_000
CHUNK_TRIALS = 2048
CHUNK_DOUBLES = 1 << 22
_MASK64 = (1 << 64) - 1


def trial_generator(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or trial < 0 or stream < 0:
        raise ValueError("seed, trial and stream must be non-negative")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, stream, trial]))


def _uses_fisher_yates(N):
    return N <= FISHER_YATES_MAX_N


def draw_sequence(pop: PopulationSpec, seed: int, trial: int = 0, stream: int = 0) -> Iterator[int]:
    """Lazily yield X_1, X_2, ..., X_N for one trial.

    Produces the same values as the batch path (:func:`prefix_counts`) for the
    same ``(seed, trial, stream)``.
    """
    N, M = pop.N, pop.require_M()
    rng = trial_generator(seed, trial, stream)
    if _uses_fisher_yates(N):
        units = np.zeros(N, np.int8)
        units[:M] = 1
        for i in range(N):
            j = min(i + int(rng.random() * (N - i)), N - 1)
            units[i], units[j] = units[j], units[i]
            yield int(units[i])
    else:
        rem_M = M
        for i in range(N):
            hit = rng.random() < rem_M / (N - i)
            rem_M -= hit
            yield int(hit)


def prefix_counts(
    pop: PopulationSpec, n: int, trials: int, seed: int, stream: int = 0, first_trial: int = 0
) -> np.ndarray:
    """Running success counts K_1..K_n for each trial, shape ``(trials, n)``."""
    N, M = pop.N, pop.require_M()
    if not 1 <= n <= N:
        raise ValueError(f"prefix length must be in 1..{N}, got {n}")
    if trials < 1:
        raise ValueError("trials must be positive")
    kernel = kernels.prefix_fisher_yates if _uses_fisher_yates(N) else kernels.prefix_sequential
    if seed < 0 or stream < 0 or first_trial < 0:
        raise ValueError("seed, trial and stream must be non-negative")
    key0 = np.uint64(seed & _MASK64)
    key1 = np.uint64((seed >> 64) & _MASK64)
    # keep each uniform block near 32 MB
    rows = max(1, min(CHUNK_TRIALS, CHUNK_DOUBLES // n))
    out = np.empty((trials, n), np.int64)
    for start in range(0, trials, rows):
        stop = min(trials, start + rows)
        u = kernels.philox_uniforms(key0, key1, stream, first_trial + start, stop - start, n)
        out[start:stop] = kernel(u, N, M)
    return out


# -- sampling schemes ---------------------------------------------------------


@dataclass(frozen=True)
class FixedSize:
    n: int
    margins: "object"  # AbsRelMargins


@dataclass(frozen=True)
class Inverse:
    r: int
    margin: "object"  # RelMargin


@dataclass(frozen=True)
class Multistage:
    plan: "object"  # StagePlan
    endpoint_rule: str = "closed"


@dataclass(frozen=True)
class TrialBatch:
    seed: int
    trials: int
    scheme: object
    stream: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class CoverageEstimate:
    estimate: float
    se: float
    hits: int
    trials: int


def simulate_batch(batch: TrialBatch, pop: PopulationSpec) -> dict:
    """Per-trial outcomes of ``batch.scheme`` as a dict of equal-length arrays."""
    scheme = batch.scheme
    N, M = pop.N, pop.require_M()
    if isinstance(scheme, FixedSize):
        counts = prefix_counts(pop, scheme.n, batch.trials, batch.seed, batch.stream)
        return {"n": np.full(batch.trials, scheme.n), "k": counts[:, -1]}
    if isinstance(scheme, Inverse):
        counts = prefix_counts(pop, N, batch.trials, batch.seed, batch.stream)
        reached = counts >= scheme.r
        any_hit = reached.any(axis=1)
        n_stop = np.where(any_hit, reached.argmax(axis=1) + 1, N)
        k_stop = counts[np.arange(batch.trials), n_stop - 1]
        return {"n_stop": n_stop, "k_stop": k_stop}
    if isinstance(scheme, Multistage):
        from .multistage import simulate_stages

        return simulate_stages(pop, scheme.plan, batch.trials, batch.seed, batch.stream)
    raise TypeError(f"unknown scheme {scheme!r}")


def coverage_hits(batch: TrialBatch, pop: PopulationSpec, outcomes: dict) -> np.ndarray:
    """Boolean array: did each trial meet its scheme's coverage event."""
    scheme = batch.scheme
    N, M = pop.N, pop.require_M()
    if isinstance(scheme, FixedSize):
        from .fixed_size import mixed_good_interval

        lo, hi = mixed_good_interval(N, M, scheme.n, scheme.margins)
        return (outcomes["k"] >= lo) & (outcomes["k"] <= hi)
    if isinstance(scheme, Inverse):
        from .inverse import relerr_covered

        pairs = np.stack([outcomes["n_stop"], outcomes["k_stop"]], axis=1)
        uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
        ok = np.array([relerr_covered(N, M, int(m), int(k), scheme.margin.eps) for m, k in uniq])
        return ok[np.asarray(inv).reshape(-1)]
    if isinstance(scheme, Multistage):
        from .multistage import interval_covers

        return interval_covers(outcomes["L"], outcomes["U"], M, N, scheme.endpoint_rule)
    raise TypeError(f"unknown scheme {scheme!r}")


def _rows(outcomes):
    keys = list(outcomes)
    for i in range(len(outcomes[keys[0]])):
        yield {key: int(outcomes[key][i]) for key in keys}


def estimate_coverage(
    batch: TrialBatch, pop: PopulationSpec, criterion: Optional[Callable[[dict], bool]] = None
) -> CoverageEstimate:
    """Empirical coverage with its binomial standard error.

    ``criterion`` defaults to the scheme's own coverage event; a callable gets
    one trial's outcome as a dict of ints.
    """
    outcomes = simulate_batch(batch, pop)
    if criterion is None:
        hits = int(np.count_nonzero(coverage_hits(batch, pop, outcomes)))
    else:
        hits = sum(1 for row in _rows(outcomes) if criterion(row))
    est = hits / batch.trials
    return CoverageEstimate(est, math.sqrt(est * (1.0 - est) / batch.trials), hits, batch.trials)


def _scheme_dict(scheme):
    if isinstance(scheme, FixedSize):
        m = scheme.margins
        return {"type": "fixed-size", "n": scheme.n, "eps_a": m.eps_a, "eps_r": m.eps_r, "delta": m.delta}
    if isinstance(scheme, Inverse):
        return {"type": "inverse", "r": scheme.r, "eps": scheme.margin.eps, "delta": scheme.margin.delta}
    return {"type": "multistage", "endpoint_rule": scheme.endpoint_rule, "plan": scheme.plan.to_dict()}


def batch_summary(
    batch: TrialBatch, pop: PopulationSpec, exact: Optional[Fraction] = None, csv_path: Optional[str] = None
) -> dict:
    """JSON-ready summary of one batch; optionally dumps per-trial rows to CSV."""
    outcomes = simulate_batch(batch, pop)
    hits = coverage_hits(batch, pop, outcomes)
    est = float(hits.mean())
    se = math.sqrt(est * (1.0 - est) / batch.trials)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            keys = list(outcomes)
            writer.writerow(["trial", *keys, "covered"])
            for t in range(batch.trials):
                writer.writerow([t, *(int(outcomes[k][t]) for k in keys), int(hits[t])])
    out = {
        "N": pop.N,
        "M": pop.M,
        "seed": batch.seed,
        "stream": batch.stream,
        "trials": batch.trials,
        "scheme": _scheme_dict(batch.scheme),
        "rng": "philox4x64-10, key=seed, counter=[0,0,stream,trial]",
        "coverage_estimate": est,
        "standard_error": se,
    }
    if exact is not None:
        exact_f = float(exact)
        out["coverage_exact"] = exact_f
        out["z_score"] = (est - exact_f) / math.sqrt(max(exact_f * (1 - exact_f), 1e-300) / batch.trials)
    return out
