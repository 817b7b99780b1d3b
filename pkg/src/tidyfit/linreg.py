"""Ordinary least squares with tidy, augment and glance outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import f_upper_tail_p, t_quantile, t_two_sided_p
from .errors import ArgumentError, InsufficientDataError
from .formula import LinearFormula, design_matrix, parse_formula
from .frame import Column, Frame
from .linalg import back_substitute, check_rank, householder_qr, r_inverse_gram

# residual norms this far below ||y|| are rounding noise of an exact fit
EXACT_FIT_RTOL = 64 * np.finfo(float).eps
HAT_ONE_TOL = 10 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class LmFit:
    term_names: tuple
    coefficients: np.ndarray
    xtx_inverse: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    hat: np.ndarray
    sigma: float
    rss: float
    tss: float
    n: int
    p: int
    formula: LinearFormula | None = None
    data: Frame | None = None

    @property
    def df_residual(self):
        return self.n - self.p


def fit_ols(X, y, names=None) -> LmFit:
    """Least-squares fit of ``y`` on the columns of ``X`` via Householder QR.

    Rank deficiency raises :class:`SingularDesignError` naming the first
    aliased column instead of dropping it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ArgumentError(f"shape mismatch: X {X.shape}, y {y.shape}")
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ArgumentError(f"{len(names)} names for {p} columns")
    if n <= p:
        raise InsufficientDataError(f"{n} observations cannot estimate {p} coefficients")
    Q1, R = householder_qr(X)
    check_rank(R, names)
    beta = back_substitute(R, Q1.T @ y)
    fitted = X @ beta
    resid = y - fitted
    if np.linalg.norm(resid) <= EXACT_FIT_RTOL * np.linalg.norm(y):
        resid = np.zeros(n)
        fitted = y.copy()
    rss = float(resid @ resid)
    centered = y - y.mean()
    hat = np.sum(Q1 * Q1, axis=1)
    # leverage within rounding of 1 is an exact leverage point
    hat[hat > 1.0 - HAT_ONE_TOL] = 1.0
    return LmFit(
        term_names=names,
        coefficients=beta,
        xtx_inverse=r_inverse_gram(R),
        residuals=resid,
        fitted=fitted,
        hat=hat,
        sigma=math.sqrt(rss / (n - p)),
        rss=rss,
        tss=float(centered @ centered),
        n=n,
        p=p,
    )


def lm(formula, data: Frame) -> LmFit:
    """Fit a linear formula (text or parsed) on a frame."""
    if isinstance(formula, str):
        formula = parse_formula(formula)
    if not isinstance(formula, LinearFormula):
        raise ArgumentError("lm needs a linear formula (no start values)")
    y, X, names = design_matrix(formula, data)
    fit = fit_ols(X, y, names)
    return LmFit(**{**fit.__dict__, "formula": formula, "data": data})


def _wald(estimate, se, df):
    """Statistic and two-sided p-value; a zero standard error gives +-inf and p = 0."""
    stats, pvals = [], []
    for b, s in zip(estimate, se):
        if s == 0.0:
            stat = math.copysign(math.inf, b) if b != 0 else math.nan
        else:
            stat = b / s
        stats.append(stat)
        pvals.append(t_two_sided_p(stat, df))
    return np.array(stats), np.array(pvals)


def coefficient_table(names, estimate, se, df, conf_level=None) -> Frame:
    """The shared (term, estimate, std.error, statistic, p.value) layout."""
    stat, pval = _wald(estimate, se, df)
    cols = {
        "term": Column.build("term", list(names), "text"),
        "estimate": np.asarray(estimate, dtype=float),
        "std.error": np.asarray(se, dtype=float),
        "statistic": stat,
        "p.value": pval,
    }
    if conf_level is not None:
        if not 0 < conf_level < 1:
            raise ArgumentError(f"conf_level must be in (0, 1), got {conf_level}")
        q = t_quantile((1 + conf_level) / 2, df)
        cols["conf.low"] = cols["estimate"] - q * cols["std.error"]
        cols["conf.high"] = cols["estimate"] + q * cols["std.error"]
    return Frame(cols)


def tidy_lm(fit: LmFit, conf_level: float | None = None) -> Frame:
    se = fit.sigma * np.sqrt(np.diag(fit.xtx_inverse))
    return coefficient_table(fit.term_names, fit.coefficients, se, fit.df_residual, conf_level)


def _source_columns(fit):
    cols = []
    data = fit.data
    if data is None:
        return cols
    if data.row_labels is not None:
        cols.append(Column.build(".rownames", list(data.row_labels), "text"))
    names = fit.formula.data_symbols() if fit.formula is not None else data.names
    cols.extend(data.column(n) for n in names)
    return cols


def augment_lm(fit: LmFit) -> Frame:
    """Observation-level table: modeled columns plus fit diagnostics.

    Diagnostics are the standard single-deletion influence measures; rows with
    leverage exactly 1 get NaN for ``.sigma``, ``.cooksd`` and ``.std.resid``.
    """
    n, p = fit.n, fit.p
    h, e, s2 = fit.hat, fit.residuals, fit.sigma ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus = np.where(h >= 1.0, np.nan, 1.0 - h)
        loo_var = ((n - p) * s2 - e ** 2 / one_minus) / (n - p - 1) if n - p - 1 > 0 else np.full(n, np.nan)
        loo_sigma = np.sqrt(np.maximum(loo_var, 0.0))
        cooksd = e ** 2 * h / (p * s2 * one_minus ** 2)
        std_resid = e / (fit.sigma * np.sqrt(one_minus))
    diag = [
        (".fitted", fit.fitted),
        (".se.fit", fit.sigma * np.sqrt(h)),
        (".resid", e),
        (".hat", h),
        (".sigma", loo_sigma),
        (".cooksd", cooksd),
        (".std.resid", std_resid),
    ]
    cols = _source_columns(fit) + [Column.build(k, np.asarray(v, dtype=float)) for k, v in diag]
    return Frame(cols, n_rows=n)


def log_likelihood(rss, n):
    """Gaussian log-likelihood at the ML variance ``rss / n``."""
    with np.errstate(divide="ignore"):
        return -n / 2.0 * (math.log(2 * math.pi) + float(np.log(rss / n)) + 1.0)


def information_criteria(rss, n, k):
    """``(logLik, AIC, BIC)`` counting ``k`` estimated parameters."""
    ll = log_likelihood(rss, n)
    return ll, -2.0 * ll + 2.0 * k, -2.0 * ll + math.log(n) * k


def glance_lm(fit: LmFit) -> Frame:
    n, p, rss, tss = fit.n, fit.p, fit.rss, fit.tss
    if tss > 0:
        # with an intercept rss <= tss; clamp rounding that says otherwise
        r2 = min(max(1.0 - rss / tss, 0.0), 1.0)
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    else:
        r2 = adj = math.nan
    if tss > 0 and p > 1:
        num = (tss - rss) / (p - 1)
        den = rss / (n - p)
        F = num / den if den > 0 else math.inf
        pval = f_upper_tail_p(F, p - 1, n - p)
    else:
        F = pval = math.nan
    ll, aic, bic = information_criteria(rss, n, p + 1)
    return Frame({
        "r.squared": [r2],
        "adj.r.squared": [adj],
        "sigma": [fit.sigma],
        "statistic": [F],
        "p.value": [pval],
        "df": [p],
        "logLik": [ll],
        "AIC": [aic],
        "BIC": [bic],
        "deviance": [rss],
        "df.residual": [fit.df_residual],
    })
