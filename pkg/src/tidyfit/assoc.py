"""Pearson and Spearman correlation tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import t_two_sided_p
from .errors import ArgumentError, DegenerateInputError
from .frame import Frame


@dataclass(frozen=True)
class CorTestResult:
    method: str
    estimate: float
    statistic: float
    p_value: float
    n: int


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ArgumentError(f"x has {x.size} values, y has {y.size}")
    if x.size < 3:
        raise ArgumentError(f"a correlation test needs at least 3 pairs, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ArgumentError("correlation input has non-finite values")
    return x, y


def midranks(x) -> np.ndarray:
    """Ranks 1..n, tied values sharing the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    s = x[order]
    n = s.size
    starts = np.concatenate([[0], np.flatnonzero(s[1:] != s[:-1]) + 1])
    ends = np.concatenate([starts[1:], [n]])
    avg = (starts + ends + 1) / 2.0   # mean of positions start+1..end
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        return None
    r = float(a @ b) / math.sqrt(saa * sbb)
    return min(max(r, -1.0), 1.0)


def _t_test(r, n):
    if abs(r) == 1.0:
        return math.copysign(math.inf, r), 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t, t_two_sided_p(t, n - 2)


def pearson_test(x, y) -> CorTestResult:
    x, y = _pair(x, y)
    r = _corr(x, y)
    if r is None:
        raise DegenerateInputError("pearson correlation is undefined when a variable is constant")
    t, p = _t_test(r, x.size)
    return CorTestResult("pearson", r, t, p, x.size)


def spearman_test(x, y) -> CorTestResult:
    """Spearman's rho with ``S = (1 - rho) n (n^2 - 1) / 6`` and a t-approximate p-value."""
    x, y = _pair(x, y)
    n = x.size
    rho = _corr(midranks(x), midranks(y))
    if rho is None:
        raise DegenerateInputError("spearman correlation is undefined when every value is tied")
    S = (1.0 - rho) * n * (n * n - 1) / 6.0
    _, p = _t_test(rho, n)
    return CorTestResult("spearman", rho, S, p, n)


def tidy_htest(result: CorTestResult) -> Frame:
    return Frame({
        "estimate": [float(result.estimate)],
        "statistic": [float(result.statistic)],
        "p.value": [float(result.p_value)],
        "method": [result.method],
    })
