import csv
import itertools
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from finpop.bounds import AbsRelMargins, RelMargin
from finpop.fixed_size import exact_mixed_coverage
from finpop.hypergeom import EvalMode, PopulationSpec, pmf
from finpop.inverse import exact_relerr_coverage
from finpop.montecarlo import (
    CHUNK_TRIALS,
    FixedSize,
    Inverse,
    Multistage,
    TrialBatch,
    batch_summary,
    draw_sequence,
    estimate_coverage,
    prefix_counts,
    simulate_batch,
    trial_generator,
)
from finpop.multistage import build_stage_plan, exact_coverage


def pooled_chisquare(observed, expected):
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp_ = np.append(expected[keep], expected[~keep].sum())
    if exp_[-1] == 0:
        obs, exp_ = obs[:-1], exp_[:-1]
    return chisquare(obs, exp_ * obs.sum() / exp_.sum()).pvalue


class TestDrawSequence:
    @pytest.mark.parametrize("N, M", [(1, 0), (1, 1), (17, 5), (40, 40), (250_000, 123_456)])
    def test_full_sequence_sums_to_M(self, N, M):
        if N > 1000:
            seq = list(itertools.islice(draw_sequence(PopulationSpec(N, M), seed=3), 2000))
            assert set(seq) <= {0, 1}
            return
        seq = list(draw_sequence(PopulationSpec(N, M), seed=3))
        assert len(seq) == N and sum(seq) == M

    def test_reproducible(self):
        pop = PopulationSpec(50, 20)
        a = list(draw_sequence(pop, seed=8, trial=2))
        b = list(draw_sequence(pop, seed=8, trial=2))
        c = list(draw_sequence(pop, seed=8, trial=3))
        assert a == b and a != c

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            trial_generator(-1, 0)


class TestPrefixCounts:
    @pytest.mark.parametrize("N, M, n", [(30, 12, 10), (30, 25, 30), (200_000, 150_000, 60)])
    def test_support(self, N, M, n):
        K = prefix_counts(PopulationSpec(N, M), n, 500, seed=1)
        steps = np.arange(1, n + 1)
        assert (K <= M).all() and (K >= steps - (N - M)).all()
        assert (K <= steps).all() and (np.diff(K, axis=1, prepend=0) >= 0).all()

    def test_matches_lazy_path(self):
        for pop in (PopulationSpec(60, 21), PopulationSpec(150_000, 40_000)):
            K = prefix_counts(pop, 30, 4, seed=2**80 + 3, stream=5, first_trial=11)
            for t in range(4):
                seq = list(itertools.islice(draw_sequence(pop, 2**80 + 3, 11 + t, 5), 30))
                np.testing.assert_array_equal(K[t], np.cumsum(seq))

    def test_chunking_does_not_matter(self):
        pop = PopulationSpec(40, 13)
        trials = CHUNK_TRIALS + 77
        whole = prefix_counts(pop, 25, trials, seed=9)
        parts = np.vstack(
            [prefix_counts(pop, 25, 1000, seed=9), prefix_counts(pop, 25, trials - 1000, seed=9, first_trial=1000)]
        )
        np.testing.assert_array_equal(whole, parts)

    def test_pmf_chi_square(self):
        N, M, n = 30, 12, 10
        K = prefix_counts(PopulationSpec(N, M), n, 100_000, seed=2024)[:, -1]
        ks = np.arange(n + 1)
        observed = np.bincount(K, minlength=n + 1)
        expected = np.array([float(pmf(N, M, n, int(k), EvalMode.EXACT)) for k in ks]) * 100_000
        assert pooled_chisquare(observed, expected) > 0.01

    def test_sequential_path_chi_square(self):
        N, M, n = 150_000, 60_000, 25
        K = prefix_counts(PopulationSpec(N, M), n, 40_000, seed=5)[:, -1]
        observed = np.bincount(K, minlength=n + 1)
        expected = np.array([pmf(N, M, n, k) for k in range(n + 1)]) * 40_000
        assert pooled_chisquare(observed, expected) > 0.01

    def test_exchangeable(self):
        N, M, n = 9, 4, 3
        K = prefix_counts(PopulationSpec(N, M), N, 50_000, seed=12)
        X = np.diff(K, axis=1, prepend=0)
        perm = np.random.default_rng(0).permutation(N)[:n]
        patterns = list(itertools.product((0, 1), repeat=n))
        code = 1 << np.arange(n)[::-1]
        head = np.bincount(X[:, :n] @ code, minlength=2**n)
        shuffled = np.bincount(X[:, perm] @ code, minlength=2**n)
        exact = np.array(
            [math.perm(M, sum(p)) * math.perm(N - M, n - sum(p)) / math.perm(N, n) for p in patterns]
        )
        assert exact.sum() == pytest.approx(1.0)
        assert pooled_chisquare(head, exact * 50_000) > 0.01
        assert pooled_chisquare(shuffled, exact * 50_000) > 0.01

    @pytest.mark.parametrize("bad", [dict(n=0), dict(n=41), dict(trials=0)])
    def test_bad_arguments(self, bad):
        args = dict(n=5, trials=3) | bad
        with pytest.raises(ValueError):
            prefix_counts(PopulationSpec(40, 3), args["n"], args["trials"], seed=1)


class TestEstimates:
    def test_always_true_criterion(self):
        est = estimate_coverage(TrialBatch(1, 500, FixedSize(10, AbsRelMargins(0.1, 0.4, 0.2))), PopulationSpec(50, 20), lambda row: True)
        assert (est.estimate, est.se, est.hits) == (1.0, 0.0, 500)

    def test_fixed_size_against_exact(self):
        pop, m = PopulationSpec(400, 90), AbsRelMargins(0.05, 0.2, 0.1)
        exact = float(exact_mixed_coverage(pop, 120, m))
        est = estimate_coverage(TrialBatch(17, 20_000, FixedSize(120, m)), pop)
        se = math.sqrt(exact * (1 - exact) / 20_000)
        assert abs(est.estimate - exact) <= 3 * se

    def test_inverse_against_exact(self):
        pop, m = PopulationSpec(120, 50), RelMargin(0.3, 0.1)
        exact = float(exact_relerr_coverage(pop, 12, m))
        est = estimate_coverage(TrialBatch(5, 20_000, Inverse(12, m)), pop)
        se = math.sqrt(exact * (1 - exact) / 20_000)
        assert abs(est.estimate - exact) <= 3 * se

    def test_multistage_against_exact(self):
        plan = build_stage_plan(200, 0.1, 0.1, 0.9)
        pop = PopulationSpec(200, 80)
        exact = float(exact_coverage(pop, plan))
        est = estimate_coverage(TrialBatch(99, 10_000, Multistage(plan)), pop)
        se = math.sqrt(exact * (1 - exact) / 10_000)
        assert abs(est.estimate - exact) <= 3 * se

    def test_custom_criterion_sees_outcome(self):
        pop = PopulationSpec(30, 10)
        est = estimate_coverage(TrialBatch(3, 200, FixedSize(30, AbsRelMargins(0.1, 0.4, 0.2))), pop, lambda row: row["k"] == 10)
        assert est.hits == 200

    def test_unknown_scheme(self):
        with pytest.raises(TypeError):
            simulate_batch(TrialBatch(1, 2, object()), PopulationSpec(5, 2))

    def test_batch_validation(self):
        with pytest.raises(ValueError):
            TrialBatch(1, 0, FixedSize(3, AbsRelMargins(0.1, 0.4, 0.2)))


class TestSummary:
    def test_reproducible_summary_and_csv(self, tmp_path):
        pop = PopulationSpec(60, 25)
        batch = TrialBatch(4, 300, Inverse(5, RelMargin(0.2, 0.1)), stream=2)
        path = tmp_path / "trials.csv"
        a = batch_summary(batch, pop, exact=exact_relerr_coverage(pop, 5, RelMargin(0.2, 0.1)), csv_path=str(path))
        b = batch_summary(batch, pop)
        assert a["coverage_estimate"] == b["coverage_estimate"]
        assert "z_score" in a and "z_score" not in b
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 300 and rows[0].keys() == {"trial", "n_stop", "k_stop", "covered"}
        assert sum(int(r["covered"]) for r in rows) == round(a["coverage_estimate"] * 300)

    def test_multistage_scheme_record(self):
        plan = build_stage_plan(40, 0.15, 0.2, 1.0)
        out = batch_summary(TrialBatch(1, 50, Multistage(plan)), PopulationSpec(40, 7))
        assert out["scheme"]["type"] == "multistage" and out["scheme"]["plan"]["stages"] == list(plan.stages)
