import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import hypergeom as sp_hypergeom

from finpop.errors import ParameterDomainError
from finpop.hypergeom import (
    EvalMode,
    HypergeomParams,
    PopulationSpec,
    lower_tail,
    lower_tail_result,
    pmf,
    stage_transition,
    support,
    upper_tail,
    upper_tail_result,
)

EXACT = EvalMode.EXACT


@st.composite
def nmn(draw, max_N=60):
    N = draw(st.integers(1, max_N))
    M = draw(st.integers(0, N))
    n = draw(st.integers(0, N))
    return N, M, n


def _brute_pmf(N, M, n):
    """Enumerate all n-subsets of a population with units 0..M-1 marked."""
    counts = [0] * (n + 1)
    for subset in itertools.combinations(range(N), n):
        counts[sum(1 for u in subset if u < M)] += 1
    total = sum(counts)
    return [Fraction(c, total) for c in counts]


class TestPmfExamples:
    def test_census_point_mass(self):
        assert pmf(10, 5, 10, 5, EXACT) == 1
        assert pmf(10, 5, 10, 5) == pytest.approx(1.0, rel=1e-15)

    def test_no_successes(self):
        assert pmf(10, 0, 4, 0, EXACT) == 1

    def test_interior_value(self):
        assert pmf(10, 5, 4, 2, EXACT) == Fraction(100, 210)
        assert pmf(10, 5, 4, 2) == pytest.approx(100 / 210, rel=1e-14)

    def test_off_support_is_zero(self):
        assert pmf(10, 3, 4, 4, EXACT) == 0
        assert pmf(10, 3, 4, 4) == 0.0
        assert pmf(10, 8, 4, 1) == 0.0

    @pytest.mark.parametrize("N, M, n", [(6, 2, 3), (7, 4, 5), (8, 3, 4)])
    def test_matches_subset_enumeration(self, N, M, n):
        ref = _brute_pmf(N, M, n)
        assert [pmf(N, M, n, k, EXACT) for k in range(n + 1)] == ref

    @pytest.mark.parametrize("bad", [(10, 11, 3), (10, 5, 11), (0, 0, 0), (10, -1, 2)])
    def test_domain_errors(self, bad):
        with pytest.raises(ParameterDomainError):
            pmf(*bad, 0)

    def test_rejects_non_integers(self):
        with pytest.raises(ParameterDomainError):
            pmf(10, 5, 4, 1.0)


class TestTails:
    def test_upper_examples(self):
        assert upper_tail(10, 5, 4, 0, EXACT) == 1
        assert upper_tail(20, 20, 5, 5, EXACT) == 1
        assert upper_tail(10, 5, 4, 3, EXACT) == Fraction(55, 210)
        assert upper_tail(10, 5, 4, 3) == pytest.approx(55 / 210, rel=1e-14)

    def test_lower_examples(self):
        assert lower_tail(10, 5, 4, 4, EXACT) == 1
        assert lower_tail(10, 10, 3, 2, EXACT) == 0
        assert lower_tail(10, 10, 3, 2) == 0.0
        assert lower_tail(10, 5, 4, 1, EXACT) == Fraction(55, 210)

    def test_k_outside_range(self):
        assert upper_tail(10, 5, 4, -3, EXACT) == 1
        assert upper_tail(10, 5, 4, 9, EXACT) == 0
        assert lower_tail(10, 5, 4, 9) == 1.0

    def test_underflow_flag(self):
        res = upper_tail_result(4000, 2000, 3000, 1000)
        assert res.value == 1.0 and not res.underflow
        tiny = upper_tail_result(5000, 1000, 2500, 1000)
        assert tiny.underflow and tiny.value == 0.0
        exact = upper_tail(5000, 1000, 2500, 1000, EXACT)
        ref = math.log(exact.numerator) - math.log(exact.denominator)
        assert tiny.log_value == pytest.approx(ref, rel=1e-12)
        lo = lower_tail_result(5000, 4000, 2500, 1500)
        assert lo.underflow and lo.value == 0.0

    @settings(max_examples=150, deadline=None)
    @given(nmn())
    def test_complementarity_exact(self, args):
        N, M, n = args
        for k in range(n + 1):
            assert lower_tail(N, M, n, k, EXACT) + upper_tail(N, M, n, k + 1, EXACT) == 1

    @settings(max_examples=150, deadline=None)
    @given(nmn(max_N=200))
    def test_normalization(self, args):
        N, M, n = args
        assert sum(pmf(N, M, n, k, EXACT) for k in range(n + 1)) == 1
        assert math.fsum(pmf(N, M, n, k) for k in range(n + 1)) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(nmn(max_N=300), st.data())
    def test_log_space_against_scipy(self, args, data):
        N, M, n = args
        k = data.draw(st.integers(0, n))
        ref_up = sp_hypergeom.sf(k - 1, N, M, n)
        ref_lo = sp_hypergeom.cdf(k, N, M, n)
        if ref_up > 1e-200:
            assert upper_tail(N, M, n, k) == pytest.approx(ref_up, rel=1e-9)
        if ref_lo > 1e-200:
            assert lower_tail(N, M, n, k) == pytest.approx(ref_lo, rel=1e-9)

    @pytest.mark.parametrize("N, n", [(30, 10), (25, 25), (40, 7)])
    def test_monotone_in_M(self, N, n):
        for k in range(n + 1):
            ups = [upper_tail(N, M, n, k, EXACT) for M in range(N + 1)]
            los = [lower_tail(N, M, n, k, EXACT) for M in range(N + 1)]
            assert all(a <= b for a, b in zip(ups, ups[1:]))
            assert all(a >= b for a, b in zip(los, los[1:]))


class TestTransitions:
    def test_reduces_to_pmf(self):
        assert stage_transition(10, 5, 0, 0, 4, 2) == Fraction(100, 210)

    def test_exhausted_successes(self):
        assert stage_transition(10, 5, 5, 5, 6, 6) == 0

    def test_interior(self):
        assert stage_transition(12, 6, 4, 2, 8, 5) == Fraction(16, 70)

    def test_bad_stage_order(self):
        with pytest.raises(ParameterDomainError):
            stage_transition(12, 6, 4, 2, 4, 2)
        with pytest.raises(ParameterDomainError):
            stage_transition(12, 6, 4, 5, 8, 5)

    @pytest.mark.parametrize("N, M", [(15, 5), (20, 9), (40, 17)])
    def test_chapman_kolmogorov(self, N, M):
        n0, n1, n2 = 3, 9, 14
        for k0 in range(*_span(N, M, n0)):
            for k2 in range(n2 + 1):
                via = sum(
                    stage_transition(N, M, n0, k0, n1, k1) * stage_transition(N, M, n1, k1, n2, k2)
                    for k1 in range(*_span(N, M, n1))
                )
                assert via == stage_transition(N, M, n0, k0, n2, k2)

    @pytest.mark.parametrize("N, M, n", [(20, 9, 5), (33, 0, 10), (33, 33, 10)])
    def test_rows_sum_to_one(self, N, M, n):
        for k in range(*_span(N, M, n)):
            assert sum(stage_transition(N, M, n, k, n + 6, j) for j in range(n + 7)) == 1


def _span(N, M, n):
    lo, hi = support(N, M, n)
    return lo, hi + 1


@settings(max_examples=150, deadline=None)
@given(nmn(max_N=80), st.data())
def test_draws_and_successes_exchange(args, data):
    N, M, n = args
    k = data.draw(st.integers(0, max(n, M)))
    assert pmf(N, M, n, k, EXACT) == pmf(N, n, M, k, EXACT)
    assert pmf(N, M, n, k) == pytest.approx(pmf(N, n, M, k), rel=1e-12, abs=1e-300)


def test_population_types():
    pop = PopulationSpec(10, 4)
    assert pop.p == Fraction(2, 5)
    assert HypergeomParams(10, 4, 8).support == (2, 4)
    with pytest.raises(ParameterDomainError):
        PopulationSpec(10).require_M()
    with pytest.raises(ParameterDomainError):
        PopulationSpec(5, 6)


def test_eval_mode_coercion():
    assert EvalMode.coerce("exact") is EXACT
    assert EvalMode.coerce(EvalMode.LOG_SPACE) is EvalMode.LOG_SPACE
    with pytest.raises(ParameterDomainError):
        EvalMode.coerce("fast")
