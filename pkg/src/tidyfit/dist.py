"""Log-gamma, the regularized incomplete beta function, and t/F tail areas."""

import math

from .errors import DomainError, TidyfitError

# Lanczos approximation, g = 7, nine coefficients
_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

CF_MAX_ITER = 300
_CF_EPS = 1e-15
_TINY = 1e-300


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"ln_gamma needs x > 0, got {x}")
    if math.isinf(x):
        return math.inf
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - ln_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) by the modified Lentz method."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise TidyfitError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"betainc_reg needs 0 <= x <= 1, got {x}")
    return _betainc(a, b, x, 1.0 - x)


def _betainc(a, b, x, y):
    # y = 1 - x, passed separately so callers can supply it without cancellation
    if not (a > 0 and b > 0):
        raise DomainError(f"betainc_reg needs a, b > 0, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                 + a * math.log(x) + b * math.log(y))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        val = front * _betacf(a, b, x) / a
    else:
        val = 1.0 - front * _betacf(b, a, y) / b
    return min(max(val, 0.0), 1.0)


def t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return _betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def f_upper_tail_p(F, d1, d2):
    """P(X >= F) for the F distribution on (d1, d2) degrees of freedom."""
    if not (d1 > 0 and d2 > 0):
        raise DomainError(f"degrees of freedom must be positive, got ({d1}, {d2})")
    if math.isnan(F):
        return math.nan
    if F < 0:
        raise DomainError(f"F statistic must be non-negative, got {F}")
    if math.isinf(F):
        return 0.0
    s = d1 * F
    return _betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + s), s / (d2 + s))


def t_quantile(prob, df, tol=1e-10):
    """Upper quantile of Student's t: the ``t`` with P(T <= t) = ``prob``.

    Found by bisection on :func:`t_two_sided_p`; ``prob`` must be in (0.5, 1).
    """
    if not 0.5 < prob < 1.0:
        raise DomainError(f"t_quantile needs 0.5 < prob < 1, got {prob}")
    target = 2.0 * (1.0 - prob)
    lo, hi = 0.0, 1.0
    while t_two_sided_p(hi, df) > target:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise DomainError("t quantile out of range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if t_two_sided_p(mid, df) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
