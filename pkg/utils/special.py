"""
Regularized incomplete beta function by continued fraction

Used as the closed-form oracle for Beta posterior mass over an interval.
The continued fraction is evaluated with the modified Lentz method; the
prefactor uses scipy's log-gamma.
"""
import numpy as np
from scipy.special import gammaln

TINY = 1.0e-300


class SpecialFunctionError(Exception):
    """Raised when the continued fraction fails to converge"""
    pass


def beta_continued_fraction(a, b, x, max_iterations=10000, eps=1.0e-15):
    """
    Continued fraction part of I_x(a, b) (modified Lentz)

    Args:
        a (float): first shape parameter, > 0
        b (float): second shape parameter, > 0
        x (float): evaluation point in (0, 1)

    Returns:
        float: value of the continued fraction

    Raises:
        SpecialFunctionError: if max_iterations is exhausted
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < TINY:
        d = TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise SpecialFunctionError(
        f'continued fraction did not converge for a={a}, b={b}, x={x}'
    )


def regularized_incomplete_beta(a, b, x):
    """
    I_x(a, b), the Beta(a, b) cumulative distribution function at x

    Args:
        a (float): > 0
        b (float): > 0
        x (float): in [0, 1]

    Returns:
        float: I_x(a, b) in [0, 1]
    """
    if a <= 0 or b <= 0:
        raise ValueError(f'shape parameters must be positive, got a={a}, b={b}')
    if x < 0 or x > 1:
        raise ValueError(f'x must lie in [0, 1], got {x}')
    if x == 0:
        return 0.0
    if x == 1:
        return 1.0
    log_front = (gammaln(a + b) - gammaln(a) - gammaln(b)
                 + a * np.log(x) + b * np.log1p(-x))
    front = float(np.exp(log_front))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * beta_continued_fraction(a, b, x) / a
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b


def beta_interval_mass(a, b, lo, hi):
    """Beta(a, b) probability of [lo, hi]"""
    if not 0 <= lo <= hi <= 1:
        raise ValueError(f'invalid interval [{lo}, {hi}]')
    return regularized_incomplete_beta(a, b, hi) - regularized_incomplete_beta(a, b, lo)
