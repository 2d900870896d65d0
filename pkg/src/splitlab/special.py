"""Distribution tail functions built from first principles.

The decision engine in :mod:`splitlab.stats` must be checkable against an
independent reference implementation, so nothing here may call into scipy.
Everything is derived from two classical kernels:

- the regularized incomplete gamma function (power series for ``x < a + 1``,
  Lentz continued fraction otherwise), which yields the error function,
  the normal CDF and the chi-square survival function;
- the regularized incomplete beta function (Lentz continued fraction with
  the symmetry transform), which yields Student-t tails and the exact
  binomial CDF.

All routines iterate to machine precision; the test suite pins agreement
with scipy to 1e-8 absolute (observed closer to 1e-13) on a wide grid.
"""

from __future__ import annotations

import math

_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_MAX_ITER = 600


def _gamma_p_series(a: float, x: float) -> float:
    # P(a, x) by power series; converges fast for x < a + 1.
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"gamma series failed to converge (a={a}, x={x})")


def _gamma_q_contfrac(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz continued fraction; converges fast for x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"gamma continued fraction failed to converge (a={a}, x={x})")


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_contfrac(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def erf(x: float) -> float:
    """Error function via the incomplete gamma connection erf(x) = P(1/2, x^2)."""
    if x == 0.0:
        return 0.0
    s = gamma_p(0.5, x * x)
    return s if x > 0.0 else -s


def erfc(x: float) -> float:
    """Complementary error function, accurate in the far tail."""
    if x == 0.0:
        return 1.0
    if x > 0.0:
        return gamma_q(0.5, x * x)
    return 2.0 - gamma_q(0.5, x * x)


_SQRT2 = math.sqrt(2.0)


def normal_cdf(z: float) -> float:
    """Standard normal CDF."""
    return 0.5 * erfc(-z / _SQRT2)


def normal_sf(z: float) -> float:
    """Standard normal survival function, P(Z > z)."""
    return 0.5 * erfc(z / _SQRT2)


def normal_two_sided_p(z: float) -> float:
    """Two-sided tail probability P(|Z| >= |z|)."""
    return erfc(abs(z) / _SQRT2)


# Acklam's rational approximation for the normal quantile, then one Halley
# step against our own CDF bringing the result to machine precision.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def normal_ppf(p: float) -> float:
    """Standard normal quantile function (inverse CDF)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # Halley refinement.
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def _beta_contfrac(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"beta continued fraction failed to converge (a={a}, b={b}, x={x})")


def beta_inc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # Use the symmetry transform to stay in the fast-converging region.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_contfrac(a, b, x) / a
    return 1.0 - front * _beta_contfrac(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided Student-t tail probability P(|T| >= |t|) for df > 0."""
    if df <= 0.0:
        raise ValueError("df must be positive")
    if t == 0.0:
        return 1.0
    return beta_inc(df / 2.0, 0.5, df / (df + t * t))


def t_sf(t: float, df: float) -> float:
    """Student-t survival function P(T > t)."""
    p = 0.5 * t_two_sided_p(t, df)
    return p if t >= 0.0 else 1.0 - p


def t_ppf_upper(tail: float, df: float) -> float:
    """Positive t with P(T > t) = tail, for tail in (0, 0.5).

    Inverts the incomplete beta representation by bisection; robustness
    matters more than speed here (a handful of calls per report).
    """
    if not 0.0 < tail < 0.5:
        raise ValueError("tail must be in (0, 0.5)")
    if df <= 0.0:
        raise ValueError("df must be positive")
    lo, hi = 0.0, 2.0
    while t_sf(hi, df) > tail:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("t quantile bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if t_sf(mid, df) > tail:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_sf(x: float, df: float) -> float:
    """Chi-square survival function P(X > x) with df degrees of freedom."""
    if df <= 0.0:
        raise ValueError("df must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    return gamma_q(df / 2.0, x / 2.0)


def binom_cdf(k: int, n: int, p: float) -> float:
    """Exact binomial CDF P(X <= k) for X ~ Binomial(n, p)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    # P(X <= k) = I_{1-p}(n - k, k + 1)
    return beta_inc(n - k, k + 1, 1.0 - p)


def binom_central_band(n: int, p: float, mass: float = 0.99) -> tuple[int, int]:
    """Smallest [k_lo, k_hi] with at most (1-mass)/2 probability in each tail.

    Used for acceptance bands around a nominal rate: an observed count is
    inside the band iff it is not in either extreme tail.
    """
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must be in (0, 1)")
    tail = (1.0 - mass) / 2.0
    # largest k_lo with P(X < k_lo) <= tail
    k_lo = 0
    while k_lo < n and binom_cdf(k_lo, n, p) <= tail:
        k_lo += 1
    # smallest k_hi with P(X > k_hi) <= tail
    k_hi = n
    while k_hi > 0 and 1.0 - binom_cdf(k_hi - 1, n, p) <= tail:
        k_hi -= 1
    return k_lo, k_hi
