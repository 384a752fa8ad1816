"""
Chi-square goodness of fit.

confidence(zeta, nu) = Pr[chi2_nu >= zeta] = 1 - P(nu/2, zeta/2), with P the
regularized lower incomplete gamma function (series below a + 1, Lentz
continued fraction for the upper tail above).
"""
import math

import numpy as np

EPSILON = 1e-15
MAX_TERMS = 1000
TINY = 1e-300


class EstimationError(Exception):
    pass


def _lower_series(a, x):
    """P(a, x) by its power series, valid for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPSILON:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a, x):
    """Q(a, x) by modified Lentz continued fraction, valid for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    fraction = d
    for i in range(1, MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        fraction *= delta
        if abs(delta - 1.0) < EPSILON:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * fraction


def regularized_upper_gamma(a, x):
    if a <= 0:
        raise EstimationError(f"Gamma shape must be positive, got {a}")
    if x < 0:
        raise EstimationError(f"Gamma argument must be non-negative, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_series(a, x)
    return _upper_fraction(a, x)


def confidence(zeta, nu):
    """Probability that a consistent model produces a statistic at least as large as zeta."""
    if nu < 1:
        raise EstimationError(f"Degrees of freedom must be at least 1, got {nu}")
    if not zeta >= 0:
        raise EstimationError(f"Chi-square statistic must be non-negative, got {zeta}")
    if math.isinf(zeta):
        return 0.0
    return min(max(regularized_upper_gamma(0.5 * nu, 0.5 * zeta), 0.0), 1.0)


def chi_square_value(residuals, sigma):
    """zeta = sum of squared residuals in units of their sigma."""
    r = np.asarray(residuals, dtype=float) / np.asarray(sigma, dtype=float)
    return float(r @ r)
