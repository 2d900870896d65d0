"""Decision-engine tests with independently computed reference values.

Reference numbers were produced with scipy.stats (proportions via
statsmodels-equivalent hand computation cross-checked against
scipy.stats.norm, Welch via scipy.stats.ttest_ind_from_stats, SRM via
scipy.stats.chisquare) and frozen here.
"""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs
from scipy import stats as st

from splitlab.errors import DegenerateDataError, InsufficientSampleError, ValidationFailure
from splitlab.stats import TestResult as _Result
from splitlab.stats import (
    aa_false_positive_rate,
    srm_check,
    two_proportion_ztest,
    welch_ttest,
)


class TestTwoProportion:
    def test_no_effect(self):
        r = two_proportion_ztest(50, 1000, 50, 1000)
        assert r.statistic == 0.0
        assert r.p_value == 1.0
        assert r.estimate_diff == 0.0
        assert r.df == math.inf

    def test_textbook_uplift(self):
        # 5.0% -> 6.0% on 10k per arm; frozen from scipy.stats.norm.
        r = two_proportion_ztest(500, 10000, 600, 10000, alpha=0.05)
        assert r.statistic == pytest.approx(3.101614034661568, rel=1e-10)
        assert r.p_value == pytest.approx(0.0019246872509622584, rel=1e-10)
        assert r.estimate_diff == pytest.approx(0.01)
        assert r.ci_low == pytest.approx(0.0036823455976911796, rel=1e-10)
        assert r.ci_high == pytest.approx(0.016317654402308812, rel=1e-10)
        assert r.ci_low <= r.estimate_diff <= r.ci_high
        assert r.significant

    def test_total_separation_is_finite(self):
        r = two_proportion_ztest(0, 100, 100, 100)
        assert math.isfinite(r.statistic)
        assert r.statistic == pytest.approx(14.142135623730951, rel=1e-12)
        assert 0.0 < r.p_value < 1e-15
        assert r.p_value == pytest.approx(2.0884875837624556e-45, rel=1e-9)
        # Unpooled variance vanishes at the boundary: interval collapses.
        assert (r.ci_low, r.ci_high) == (1.0, 1.0)
        assert r.degenerate

    def test_degenerate_pools(self):
        with pytest.raises(DegenerateDataError):
            two_proportion_ztest(0, 100, 0, 100)
        with pytest.raises(DegenerateDataError):
            two_proportion_ztest(100, 100, 50, 50)

    def test_input_validation(self):
        with pytest.raises(ValidationFailure):
            two_proportion_ztest(-1, 100, 5, 100)
        with pytest.raises(ValidationFailure):
            two_proportion_ztest(5, 100, 101, 100)
        with pytest.raises(ValidationFailure):
            two_proportion_ztest(5, 0, 5, 100)
        with pytest.raises(ValidationFailure):
            two_proportion_ztest(5, 100, 5, 100, alpha=1.0)

    @given(x_c=hs.integers(0, 200), n_extra_c=hs.integers(1, 200),
           x_t=hs.integers(0, 200), n_extra_t=hs.integers(1, 200))
    @settings(max_examples=200, deadline=None)
    def test_matches_scipy_everywhere(self, x_c, n_extra_c, x_t, n_extra_t):
        n_c = x_c + n_extra_c
        n_t = x_t + n_extra_t
        pooled = (x_c + x_t) / (n_c + n_t)
        if pooled in (0.0, 1.0):
            return
        r = two_proportion_ztest(x_c, n_c, x_t, n_t)
        se = math.sqrt(pooled * (1 - pooled) * (1 / n_c + 1 / n_t))
        z = (x_t / n_t - x_c / n_c) / se
        assert r.statistic == pytest.approx(z, rel=1e-12)
        assert r.p_value == pytest.approx(2 * st.norm.sf(abs(z)), rel=1e-9, abs=1e-300)

    def test_symmetry_under_arm_swap(self):
        a = two_proportion_ztest(500, 10000, 600, 10000)
        b = two_proportion_ztest(600, 10000, 500, 10000)
        assert a.statistic == pytest.approx(-b.statistic)
        assert a.p_value == pytest.approx(b.p_value)
        assert a.ci_low == pytest.approx(-b.ci_high)


class TestWelch:
    def test_identical_moments(self):
        r = welch_ttest(10.0, 4.0, 100, 10.0, 4.0, 100)
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_textbook_case(self):
        # Frozen from scipy.stats.ttest_ind_from_stats(equal_var=False).
        r = welch_ttest(10.0, 4.0, 100, 10.5, 4.0, 100, alpha=0.05)
        assert r.statistic == pytest.approx(1.7677669529663689, rel=1e-12)
        assert r.df == pytest.approx(198.0, rel=1e-12)
        assert r.p_value == pytest.approx(0.07864005321396467, rel=1e-9)
        assert r.ci_low == pytest.approx(-0.05777077247789586, rel=1e-9)
        assert r.ci_high == pytest.approx(1.057770772477896, rel=1e-9)
        assert not r.significant

    def test_zero_variance_equal_means(self):
        r = welch_ttest(3.0, 0.0, 10, 3.0, 0.0, 10)
        assert r.p_value == 1.0
        assert r.degenerate

    def test_zero_variance_separated_means(self):
        r = welch_ttest(3.0, 0.0, 10, 4.0, 0.0, 10)
        assert r.p_value == 0.0
        assert r.degenerate
        assert r.ci_low == r.ci_high == pytest.approx(1.0)

    def test_small_samples_refused(self):
        with pytest.raises(InsufficientSampleError):
            welch_ttest(1.0, 1.0, 1, 2.0, 1.0, 100)

    def test_negative_variance_refused(self):
        with pytest.raises(ValidationFailure):
            welch_ttest(1.0, -1.0, 10, 2.0, 1.0, 10)

    @given(mean_c=hs.floats(-50, 50), mean_t=hs.floats(-50, 50),
           var_c=hs.floats(0.01, 100), var_t=hs.floats(0.01, 100),
           n_c=hs.integers(2, 5000), n_t=hs.integers(2, 5000))
    @settings(max_examples=150, deadline=None)
    def test_matches_scipy_everywhere(self, mean_c, mean_t, var_c, var_t, n_c, n_t):
        r = welch_ttest(mean_c, var_c, n_c, mean_t, var_t, n_t)
        ref = st.ttest_ind_from_stats(mean_t, math.sqrt(var_t), n_t,
                                      mean_c, math.sqrt(var_c), n_c,
                                      equal_var=False)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)

    def test_scale_invariance(self):
        # Rescaling both arms by a constant leaves t, df and p unchanged.
        a = welch_ttest(10.0, 4.0, 60, 11.0, 9.0, 80)
        k = 1000.0
        b = welch_ttest(10.0 * k, 4.0 * k * k, 60, 11.0 * k, 9.0 * k * k, 80)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
        assert a.df == pytest.approx(b.df, rel=1e-12)
        assert a.p_value == pytest.approx(b.p_value, rel=1e-12)


class TestSrm:
    def test_perfect_split(self):
        r = srm_check([5000, 5000], [1, 1])
        assert r.chi_square == 0.0
        assert r.p_value == 1.0
        assert not r.flagged

    def test_mild_imbalance_not_flagged(self):
        r = srm_check([5100, 4900], [1, 1], threshold=0.001)
        assert r.chi_square == pytest.approx(4.0, rel=1e-12)
        assert r.p_value == pytest.approx(0.04550026389635842, rel=1e-10)
        assert not r.flagged

    def test_real_mismatch_flagged(self):
        r = srm_check([10000, 9500], [1, 1], threshold=0.001)
        assert r.chi_square == pytest.approx(12.820512820512821, rel=1e-12)
        assert r.p_value == pytest.approx(0.0003428397416111479, rel=1e-9)
        assert r.flagged

    def test_attrition_magnitudes(self):
        # Half the treatment arm dropped: 500 observed vs 375 expected each
        # on 750 survivors, and the per-arm-1000 variant of the same story.
        assert srm_check([500, 250], [1, 1]).chi_square == pytest.approx(250.0 / 3.0, rel=1e-12)
        assert srm_check([1000, 500], [1, 1]).chi_square == pytest.approx(500.0 / 3.0, rel=1e-12)

    def test_weighted_split(self):
        r = srm_check([7500, 2500], [3, 1])
        assert r.chi_square == 0.0
        r = srm_check([295, 105], [3, 1])
        expected = st.chisquare([295, 105], [300, 100])
        assert r.chi_square == pytest.approx(expected.statistic, rel=1e-12)
        assert r.p_value == pytest.approx(expected.pvalue, rel=1e-9)

    def test_three_variants(self):
        r = srm_check([3400, 3300, 3300], [1, 1, 1])
        ref = st.chisquare([3400, 3300, 3300])
        assert r.df == 2
        assert r.chi_square == pytest.approx(ref.statistic, rel=1e-12)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValidationFailure):
            srm_check([100], [1])
        with pytest.raises(ValidationFailure):
            srm_check([100, 100], [1])
        with pytest.raises(ValidationFailure):
            srm_check([100, 100], [1, 0])
        with pytest.raises(ValidationFailure):
            srm_check([-1, 100], [1, 1])
        with pytest.raises(DegenerateDataError):
            srm_check([0, 0], [1, 1])

    @given(shift=hs.integers(0, 2000))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_imbalance(self, shift):
        # Moving visitors from one arm to the other can only raise chi-square.
        base = srm_check([5000, 5000], [1, 1])
        moved = srm_check([5000 + shift, 5000 - shift], [1, 1])
        assert moved.chi_square >= base.chi_square
        assert moved.p_value <= base.p_value


def _aa(p: float) -> _Result:
    return _Result(0.0, 1.0, 0.0, math.inf, p, -1.0, 1.0, 0.05)


class TestFalsePositivePool:
    def test_all_null(self):
        report = aa_false_positive_rate([_aa(1.0)] * 100, alpha=0.05)
        assert report.rate == 0.0
        assert report.n_false_positives == 0

    def test_exact_band_at_1000(self):
        # Central 99% band of Binomial(1000, 0.05): counts 33..69.
        report = aa_false_positive_rate([_aa(1.0)] * 1000, alpha=0.05)
        assert report.interval_low == pytest.approx(0.033)
        assert report.interval_high == pytest.approx(0.069)

    def test_counts_below_alpha(self):
        results = [_aa(0.01)] * 5 + [_aa(0.5)] * 95
        report = aa_false_positive_rate(results, alpha=0.05)
        assert report.n_false_positives == 5
        assert report.rate == pytest.approx(0.05)
        assert report.calibrated

    def test_boundary_p_not_counted(self):
        # p exactly equal to alpha is not a rejection.
        report = aa_false_positive_rate([_aa(0.05)] * 10, alpha=0.05)
        assert report.n_false_positives == 0

    def test_miscalibrated_pool(self):
        results = [_aa(0.001)] * 200 + [_aa(0.9)] * 800
        report = aa_false_positive_rate(results, alpha=0.05)
        assert report.rate == pytest.approx(0.2)
        assert not report.calibrated

    def test_empty_pool_refused(self):
        with pytest.raises(ValidationFailure):
            aa_false_positive_rate([], alpha=0.05)
