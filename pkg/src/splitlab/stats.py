"""Frequentist decision engine for two-arm comparisons.

Three questions have to be answered for every experiment readout:

1. Did the treatment move the metric? Binary metrics use a two-proportion
   z-test with a pooled-variance statistic; real-valued metrics use Welch's
   unequal-variance t-test.
2. Can the sample itself be trusted? A Pearson chi-square goodness-of-fit
   test compares per-variant recruitment counts with the configured split
   and flags sample ratio mismatch; selective attrition shows up here.
3. Does the whole stack produce the advertised false positive rate? A pool
   of null experiments is summarized into an observed rate with an exact
   binomial acceptance band around the nominal alpha.

All tail probabilities come from :mod:`splitlab.special`, which is
implemented from scratch precisely so that an external package can serve
as an independent oracle in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import special
from .errors import DegenerateDataError, InsufficientSampleError, ValidationFailure

__all__ = [
    "TestResult",
    "SrmResult",
    "FprReport",
    "two_proportion_ztest",
    "welch_ttest",
    "srm_check",
    "aa_false_positive_rate",
]


@dataclass(frozen=True)
class TestResult:
    """Outcome of a two-arm comparative test.

    Attributes:
        estimate_diff: Point estimate of treatment minus control.
        std_error: Standard error of the estimate (the one the confidence
            interval is built from).
        statistic: Test statistic, z or t depending on the test.
        df: Degrees of freedom; ``math.inf`` for the normal reference.
        p_value: Two-sided tail probability.
        ci_low: Lower confidence bound at level 1 - alpha.
        ci_high: Upper confidence bound at level 1 - alpha.
        alpha: Significance level the interval was built for.
        degenerate: True when the variance estimate collapsed to zero and
            the p-value is a documented convention rather than an estimate.
    """

    estimate_diff: float
    std_error: float
    statistic: float
    df: float
    p_value: float
    ci_low: float
    ci_high: float
    alpha: float
    degenerate: bool = False

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


@dataclass(frozen=True)
class SrmResult:
    """Sample-ratio-mismatch check outcome.

    Attributes:
        chi_square: Pearson goodness-of-fit statistic.
        df: Degrees of freedom, number of variants minus one.
        p_value: Upper-tail probability under the chi-square reference.
        flagged: True when p_value falls below the detection threshold.
        threshold: The threshold the flag was evaluated against.
    """

    chi_square: float
    df: int
    p_value: float
    flagged: bool
    threshold: float


@dataclass(frozen=True)
class FprReport:
    """False-positive-rate summary over a pool of null experiments.

    Attributes:
        n_experiments: Pool size.
        n_false_positives: Count of results with p_value below alpha.
        rate: Observed false positive rate.
        interval_low: Lower edge of the exact central 99% binomial band
            for the observed rate when the true rate equals alpha.
        interval_high: Upper edge of that band.
        alpha: Nominal significance level the pool is calibrated against.
    """

    n_experiments: int
    n_false_positives: int
    rate: float
    interval_low: float
    interval_high: float
    alpha: float

    @property
    def calibrated(self) -> bool:
        """Whether the observed rate sits inside the acceptance band."""
        return self.interval_low <= self.rate <= self.interval_high


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValidationFailure(f"alpha must be in (0, 1), got {alpha}")


def two_proportion_ztest(x_c: int, n_c: int, x_t: int, n_t: int,
                         alpha: float = 0.05) -> TestResult:
    """Two-sided two-proportion z-test for binary metrics.

    The statistic uses the pooled success rate, the textbook form for
    testing equality of proportions; the confidence interval uses the
    unpooled per-arm variances, which is the standard interval for the
    difference itself. No continuity correction is applied; extreme
    separations keep a finite statistic as long as the pooled rate stays
    inside (0, 1), and the far tail keeps relative accuracy through the
    complementary error function.

    Args:
        x_c: Successes in control.
        n_c: Trials in control, at least 1.
        x_t: Successes in treatment.
        n_t: Trials in treatment, at least 1.
        alpha: Two-sided significance level for the interval.

    Returns:
        TestResult with estimate_diff = x_t/n_t - x_c/n_c and df = inf.

    Raises:
        ValidationFailure: on negative counts, x > n, or n < 1.
        DegenerateDataError: when the pooled rate is 0 or 1, leaving the
            statistic undefined (all failures or all successes overall).
    """
    _check_alpha(alpha)
    if n_c < 1 or n_t < 1:
        raise ValidationFailure("each arm needs at least one trial")
    for x, n, arm in ((x_c, n_c, "control"), (x_t, n_t, "treatment")):
        if x < 0:
            raise ValidationFailure(f"negative count in {arm}: {x}")
        if x > n:
            raise ValidationFailure(f"{arm} has more successes than trials ({x} > {n})")

    p_c = x_c / n_c
    p_t = x_t / n_t
    diff = p_t - p_c

    pooled = (x_c + x_t) / (n_c + n_t)
    if pooled == 0.0 or pooled == 1.0:
        raise DegenerateDataError(
            "pooled rate is degenerate (all successes or all failures); "
            "the z statistic is undefined")
    se_pooled = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_c + 1.0 / n_t))
    z = diff / se_pooled
    p_value = special.normal_two_sided_p(z)

    se_unpooled = math.sqrt(p_c * (1.0 - p_c) / n_c + p_t * (1.0 - p_t) / n_t)
    z_crit = special.normal_ppf(1.0 - alpha / 2.0)
    return TestResult(
        estimate_diff=diff,
        std_error=se_unpooled,
        statistic=z,
        df=math.inf,
        p_value=p_value,
        ci_low=diff - z_crit * se_unpooled,
        ci_high=diff + z_crit * se_unpooled,
        alpha=alpha,
        degenerate=se_unpooled == 0.0,
    )


def welch_ttest(mean_c: float, var_c: float, n_c: int,
                mean_t: float, var_t: float, n_t: int,
                alpha: float = 0.05) -> TestResult:
    """Welch's unequal-variance t-test for real-valued metrics.

    Degrees of freedom follow Welch-Satterthwaite. Variances are the
    usual unbiased sample variances (denominator n - 1). When both
    sample variances are exactly zero the reference distribution
    collapses: equal means yield p = 1 and differing means yield p = 0,
    both marked degenerate since no sampling variability was observed.

    Args:
        mean_c: Control sample mean.
        var_c: Control sample variance, non-negative.
        n_c: Control sample size, at least 2.
        mean_t: Treatment sample mean.
        var_t: Treatment sample variance, non-negative.
        n_t: Treatment sample size, at least 2.
        alpha: Two-sided significance level for the interval.

    Returns:
        TestResult with estimate_diff = mean_t - mean_c.

    Raises:
        InsufficientSampleError: when either arm has fewer than 2 points.
        ValidationFailure: on negative variance or bad alpha.
    """
    _check_alpha(alpha)
    if n_c < 2 or n_t < 2:
        raise InsufficientSampleError(
            f"Welch test needs at least 2 points per arm, got {n_c} and {n_t}")
    if var_c < 0.0 or var_t < 0.0:
        raise ValidationFailure("variances must be non-negative")

    diff = mean_t - mean_c
    vc = var_c / n_c
    vt = var_t / n_t
    se_sq = vc + vt

    if se_sq == 0.0:
        df = float(n_c + n_t - 2)
        if diff == 0.0:
            return TestResult(diff, 0.0, 0.0, df, 1.0, 0.0, 0.0, alpha, degenerate=True)
        statistic = math.copysign(math.inf, diff)
        return TestResult(diff, 0.0, statistic, df, 0.0, diff, diff, alpha, degenerate=True)

    se = math.sqrt(se_sq)
    t = diff / se
    df = se_sq * se_sq / (vc * vc / (n_c - 1) + vt * vt / (n_t - 1))
    p_value = special.t_two_sided_p(t, df)
    t_crit = special.t_ppf_upper(alpha / 2.0, df)
    return TestResult(
        estimate_diff=diff,
        std_error=se,
        statistic=t,
        df=df,
        p_value=p_value,
        ci_low=diff - t_crit * se,
        ci_high=diff + t_crit * se,
        alpha=alpha,
    )


def srm_check(observed: list[int], weights: list[int | float],
              threshold: float = 0.001) -> SrmResult:
    """Pearson chi-square test of recruitment counts against the split.

    Selective attrition, a broken tracking method, or a bad ramp all show
    up as a sample ratio mismatch long before they corrupt the metrics,
    so the threshold is deliberately strict and a flag here suppresses
    comparative statistics downstream.

    Args:
        observed: Recruited visitor count per variant, control first.
        weights: Configured split weights, proportional (need not sum to 1).
        threshold: Flagging threshold on the p-value.

    Returns:
        SrmResult with df = len(observed) - 1 and flagged ⇔ p < threshold.

    Raises:
        ValidationFailure: fewer than 2 variants, mismatched lengths,
            non-positive weights, or negative counts.
        DegenerateDataError: when no visitors were observed at all.
    """
    if len(observed) < 2:
        raise ValidationFailure("need at least 2 variants for an SRM check")
    if len(weights) != len(observed):
        raise ValidationFailure(
            f"{len(observed)} observed counts but {len(weights)} weights")
    if any(w <= 0 for w in weights):
        raise ValidationFailure("expected weights must be positive")
    if any(o < 0 for o in observed):
        raise ValidationFailure("observed counts must be non-negative")
    if not 0.0 < threshold < 1.0:
        raise ValidationFailure(f"threshold must be in (0, 1), got {threshold}")

    total = sum(observed)
    if total == 0:
        raise DegenerateDataError("SRM check is undefined with zero visitors")

    weight_total = sum(weights)
    chi_square = 0.0
    for obs, w in zip(observed, weights):
        expected = total * (w / weight_total)
        delta = obs - expected
        chi_square += delta * delta / expected
    df = len(observed) - 1
    p_value = special.chi2_sf(chi_square, float(df))
    return SrmResult(
        chi_square=chi_square,
        df=df,
        p_value=p_value,
        flagged=p_value < threshold,
        threshold=threshold,
    )


def aa_false_positive_rate(results: list[TestResult],
                           alpha: float = 0.05) -> FprReport:
    """Summarize a pool of null-experiment results into a calibration report.

    Every input is assumed to come from an AA comparison, so each
    p_value below alpha is a false positive by construction. The report
    carries the exact central 99% binomial band for the observed rate
    under a true rate of alpha: each excluded tail holds at most 0.5%
    probability, so a healthy stack lands inside the band 99 times in 100.

    Args:
        results: Non-empty list of AA test results.
        alpha: Nominal significance level the pool calibrates.

    Returns:
        FprReport; ``report.calibrated`` answers the go/no-go question.

    Raises:
        ValidationFailure: on an empty pool.
    """
    _check_alpha(alpha)
    if not results:
        raise ValidationFailure("cannot calibrate on an empty pool")
    n = len(results)
    n_fp = sum(1 for r in results if r.p_value < alpha)
    k_lo, k_hi = special.binom_central_band(n, alpha, mass=0.99)
    return FprReport(
        n_experiments=n,
        n_false_positives=n_fp,
        rate=n_fp / n,
        interval_low=k_lo / n,
        interval_high=k_hi / n,
        alpha=alpha,
    )
