import math
from fractions import Fraction

import mpmath as mp
import pytest

from finpop.bounds import AbsRelMargins, g
from finpop.errors import AdmissibilityError, EnumerationCapError, ParameterDomainError
from finpop.fixed_size import (
    exact_min_sample_size,
    exact_mixed_coverage,
    mixed_good_interval,
    plan_fixed_size,
    sample_size_bound,
    sample_size_bound_via_g,
    sample_size_formula,
    scan_min_sample_size,
    worst_mixed_coverage,
)
from finpop.hypergeom import EvalMode, PopulationSpec, pmf

mp.mp.dps = 50


def bound_ref(ea, er, d):
    ea, er, d = mp.mpf(ea), mp.mpf(er), mp.mpf(d)
    den = (ea + ea * er) * mp.log(1 + er) + (er - ea - ea * er) * mp.log(1 - ea * er / (er - ea))
    return er * mp.log(2 / d) / den


def coverage_ref(N, M, n, ea, er):
    """Sum the pmf over k where either event holds, each tested separately."""
    p = Fraction(M, N)
    ea, er = Fraction(ea), Fraction(er)
    total = Fraction(0)
    for k in range(n + 1):
        err = abs(Fraction(k, n) - p)
        if err < ea or err < er * p:
            total += pmf(N, M, n, k, EvalMode.EXACT)
    return total


MARGINS = [(0.02, 0.1, 0.05), (0.05, 0.2, 0.1), (0.1, 0.4, 0.2), (0.01, 0.5, 0.01), (0.2, 0.9, 0.3)]


@pytest.mark.parametrize("ea, er, d", MARGINS)
def test_bound_matches_high_precision(ea, er, d):
    m = AbsRelMargins(ea, er, d)
    ref = bound_ref(ea, er, d)
    assert sample_size_bound(m) == pytest.approx(float(ref), rel=1e-12)
    assert sample_size_bound_via_g(m) == pytest.approx(float(ref), rel=1e-12)
    assert sample_size_formula(m) == int(mp.floor(ref)) + 1


def test_golden_value():
    m = AbsRelMargins(0.02, 0.1, 0.05)
    assert sample_size_formula(m) == 3023
    assert 3022 < sample_size_bound(m) < 3023
    assert sample_size_bound(m) == pytest.approx(math.log(40) / -g(0.02, 0.2), rel=1e-12)


def test_inadmissible_margins():
    with pytest.raises(AdmissibilityError):
        sample_size_formula(AbsRelMargins(0.05, 0.1, 0.05))


class TestExactCoverage:
    def test_degenerate_populations(self):
        m = AbsRelMargins(0.05, 0.2, 0.1)
        assert exact_mixed_coverage(PopulationSpec(10, 0), 5, m) == 1
        assert exact_mixed_coverage(PopulationSpec(10, 10), 5, m) == 1

    def test_against_brute_force(self):
        m = AbsRelMargins(0.1, 0.4, 0.3)
        got = exact_mixed_coverage(PopulationSpec(50, 25), 30, m)
        assert got == coverage_ref(50, 25, 30, 0.1, 0.4)
        assert 0 < got < 1

    def test_margins_beyond_admissibility_rejected(self):
        with pytest.raises(AdmissibilityError):
            AbsRelMargins(0.1, 0.2, 0.3)

    @pytest.mark.parametrize("ea, er, d", MARGINS)
    @pytest.mark.parametrize("N", [1, 2, 9, 40])
    def test_every_M_and_n(self, ea, er, d, N):
        m = AbsRelMargins(ea, er, d)
        for M in range(N + 1):
            for n in range(1, N + 1):
                assert exact_mixed_coverage(PopulationSpec(N, M), n, m) == coverage_ref(N, M, n, ea, er)

    def test_tie_on_margin_is_a_miss(self):
        m = AbsRelMargins(0.125, 0.5, 0.1)
        lo, hi = mixed_good_interval(16, 8, 8, m)
        # p = 1/2, w = max(1/8, 1/4), n w = 2: k = 2 and k = 6 tie and miss
        assert (lo, hi) == (3, 5)

    def test_bad_sample_size(self):
        m = AbsRelMargins(0.05, 0.2, 0.1)
        with pytest.raises(ParameterDomainError):
            exact_mixed_coverage(PopulationSpec(10, 3), 0, m)
        with pytest.raises(ParameterDomainError):
            exact_mixed_coverage(PopulationSpec(10, 3), 11, m)


@pytest.mark.parametrize("ea, er, d", MARGINS)
@pytest.mark.parametrize("N", [1, 5, 37, 120])
def test_formula_size_guarantees_coverage(ea, er, d, N):
    m = AbsRelMargins(ea, er, d)
    n = min(N, sample_size_formula(m))
    worst, _ = worst_mixed_coverage(N, n, m)
    assert worst > 1 - Fraction(d)


class TestMinimalSize:
    def test_spec_instance_is_inadmissible(self):
        with pytest.raises(AdmissibilityError):
            AbsRelMargins(0.3, 0.9, 0.2)

    @pytest.mark.parametrize("ea, er, d", [(0.1, 0.4, 0.2), (0.2, 0.9, 0.3), (0.05, 0.2, 0.1)])
    def test_against_brute_force(self, ea, er, d):
        N = 60
        m = AbsRelMargins(ea, er, d)
        target = 1 - Fraction(d)

        def ok(n):
            return all(coverage_ref(N, M, n, ea, er) > target for M in range(N + 1))

        ref = next(n for n in range(1, N + 1) if ok(n))
        got = exact_min_sample_size(PopulationSpec(N), m)
        assert got == ref
        if got > 1:
            assert not ok(got - 1)
        assert got <= min(N, sample_size_formula(m))

    def test_widened_scan_reports_failures(self):
        m = AbsRelMargins(0.1, 0.4, 0.2)
        scan = scan_min_sample_size(100, m, widen=30)
        for n in scan.failures_above:
            assert worst_mixed_coverage(100, n, m)[0] <= Fraction(4, 5)
        for n in range(scan.n + 1, scan.n + 31):
            if n not in scan.failures_above:
                assert worst_mixed_coverage(100, n, m)[0] > Fraction(4, 5)

    def test_cap(self):
        with pytest.raises(EnumerationCapError, match="formula"):
            exact_min_sample_size(PopulationSpec(6000), AbsRelMargins(0.1, 0.4, 0.2))


class TestPlan:
    def test_census_note(self):
        plan = plan_fixed_size(AbsRelMargins(0.02, 0.1, 0.05), PopulationSpec(500))
        assert plan.n_formula == 3023 and plan.n_used == 500
        doc = plan.to_dict()
        assert doc["n_used"] == 500 and "census" in doc["notes"][0]

    def test_exact_needs_population(self):
        with pytest.raises(ParameterDomainError):
            plan_fixed_size(AbsRelMargins(0.1, 0.4, 0.2), exact=True)

    def test_exact_fields(self):
        plan = plan_fixed_size(AbsRelMargins(0.1, 0.4, 0.2), PopulationSpec(80), exact=True, widen=5)
        doc = plan.to_dict()
        assert doc["n_exact"] <= doc["n_formula"]
        assert doc["inputs"] == {"eps_a": 0.1, "eps_r": 0.4, "delta": 0.2, "N": 80}
