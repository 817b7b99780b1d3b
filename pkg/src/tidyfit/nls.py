"""Nonlinear least squares by Gauss-Newton with step halving.

The Jacobian comes from symbolic derivatives of the model expression, so a
model that is linear in its parameters reaches the least-squares optimum in a
single step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    BadStartError,
    ConvergenceError,
    FitError,
    InsufficientDataError,
    SchemaError,
    SingularDesignError,
    SingularGradientError,
)
from .formula import NlsFormula, compile_expr, differentiate, parse_formula, symbols
from .frame import Column, Frame
from .linalg import back_substitute, check_rank, householder_qr, r_inverse_gram
from .linreg import EXACT_FIT_RTOL, coefficient_table, information_criteria


# residual norms below this fraction of ||y|| count as an exact fit in the convergence test
OFFSET_FLOOR = 1e-4


@dataclass(frozen=True, eq=False)
class NlsFit:
    parameter_names: tuple
    estimates: np.ndarray
    jtj_inverse: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    sigma: float
    rss: float
    n: int
    q: int
    iterations: int
    achieved_tol: float
    converged: bool
    tol: float
    history: tuple = ()  # (parameter vector, rss) at the start and after each accepted step
    formula: NlsFormula | None = None
    data: Frame | None = None

    @property
    def df_residual(self):
        return self.n - self.q


class _Model:
    """Compiled model function and Jacobian over fixed data bindings."""

    def __init__(self, formula: NlsFormula, frame: Frame):
        params = formula.parameter_names
        clash = [p for p in params if p in frame]
        if clash:
            raise ArgumentError(f"parameter names {clash} are also column names")
        env = {}
        for name in formula.data_symbols():
            if name not in frame:
                raise SchemaError(f"symbol {name!r} is neither a column nor a parameter")
            env[name] = frame.numeric(name)
        self.n = frame.n_rows
        self.params = params
        self.env = env
        self.y = np.broadcast_to(compile_expr(formula.response)(env), (self.n,)).astype(float)
        self._f = compile_expr(formula.rhs)
        self._grad = [compile_expr(differentiate(formula.rhs, p)) for p in params]
        unused = [p for p in params if p not in symbols(formula.rhs)]
        if unused:
            raise ArgumentError(f"parameters {unused} do not appear in the model")

    def _env(self, theta):
        env = dict(self.env)
        env.update(zip(self.params, theta.tolist()))
        return env

    def _vec(self, v):
        v = np.asarray(v, dtype=float)
        return v if v.shape == (self.n,) else np.broadcast_to(v, (self.n,))

    def predict(self, theta):
        with np.errstate(all="ignore"):
            return self._vec(self._f(self._env(theta)))

    def jacobian(self, theta):
        env = self._env(theta)
        J = np.empty((self.n, len(self._grad)))
        with np.errstate(all="ignore"):
            for j, g in enumerate(self._grad):
                J[:, j] = g(env)
        return J


def _factor(J, names):
    if not np.all(np.isfinite(J)):
        raise SingularGradientError("gradient has non-finite entries")
    Q1, R = householder_qr(J)
    try:
        check_rank(R, names)
    except SingularDesignError as exc:
        raise SingularGradientError(f"singular gradient matrix at parameter {exc.term!r}") from None
    return Q1, R


def fit_nls(formula, data: Frame, start=None, max_iter=50, tol=1e-8, min_step_factor=1 / 1024,
            raise_on_failure=True) -> NlsFit:
    """Fit ``response ~ f(data, parameters)`` by Gauss-Newton.

    Each iteration solves the linearized least-squares step by QR and halves
    it until the residual sum of squares does not increase. After every
    accepted step the fit measures the relative offset
    ``||Q1' r|| / sqrt(RSS + (OFFSET_FLOOR * ||y||)^2)``, the share of the
    residual the linearized model could still explain, and has converged once
    that falls below ``tol``. The floor keeps zero-residual data from
    stalling. ``iterations`` counts accepted steps.
    """
    if isinstance(formula, str):
        formula = parse_formula(formula, start=start)
    if not isinstance(formula, NlsFormula):
        raise ArgumentError("fit_nls needs a formula with start values")
    model = _Model(formula, data)
    names = formula.parameter_names
    n, q = model.n, len(names)
    if n <= q:
        raise InsufficientDataError(f"{n} observations cannot estimate {q} parameters")
    theta = np.array([v for _, v in formula.parameters], dtype=float)
    y = model.y
    if not np.all(np.isfinite(y)):
        raise ArgumentError("response has non-finite values")
    ynorm = float(np.linalg.norm(y))
    floor2 = (OFFSET_FLOOR * ynorm) ** 2
    fitted = model.predict(theta)
    resid = y - fitted
    rss = float(resid @ resid)
    if not math.isfinite(rss):
        raise BadStartError("model is not finite at the starting values")
    Q1, R = _factor(model.jacobian(theta), names)
    history = [(tuple(theta), rss)]
    iterations = 0
    achieved = math.inf
    converged = False
    failure = None
    while True:
        if iterations >= max_iter:
            failure = f"no convergence after {max_iter} iterations"
            break
        step = back_substitute(R, Q1.T @ resid)
        factor = 1.0
        while True:
            trial = theta + factor * step
            f_trial = model.predict(trial)
            r_trial = y - f_trial
            with np.errstate(over="ignore", invalid="ignore"):
                rss_trial = float(r_trial @ r_trial)
            if math.isfinite(rss_trial) and rss_trial <= rss:
                break
            factor /= 2.0
            if factor < min_step_factor:
                failure = f"step factor reduced below {min_step_factor}"
                break
        if failure:
            break
        theta, fitted, resid, rss = trial, f_trial, r_trial, rss_trial
        iterations += 1
        history.append((tuple(theta), rss))
        Q1, R = _factor(model.jacobian(theta), names)
        qtr = Q1.T @ resid
        achieved = math.sqrt(float(qtr @ qtr) / (rss + floor2)) if rss > 0 else 0.0
        if achieved < tol:
            converged = True
            break
    if failure and raise_on_failure:
        raise ConvergenceError(failure, last=dict(zip(names, theta.tolist())))
    if converged and math.sqrt(rss) <= EXACT_FIT_RTOL * ynorm:
        # rounding noise of an exact fit
        resid = np.zeros(n)
        fitted = y.copy()
        rss = 0.0
    return NlsFit(
        parameter_names=tuple(names),
        estimates=theta,
        jtj_inverse=r_inverse_gram(R),
        residuals=resid,
        fitted=np.array(fitted),
        sigma=math.sqrt(rss / (n - q)),
        rss=rss,
        n=n,
        q=q,
        iterations=iterations,
        achieved_tol=achieved,
        converged=converged,
        tol=tol,
        history=tuple(history),
        formula=formula,
        data=data,
    )


def nls_jacobian(fit: NlsFit, theta=None) -> np.ndarray:
    """Symbolic Jacobian of the fitted model at ``theta`` (default: the estimates)."""
    model = _Model(fit.formula, fit.data)
    return model.jacobian(np.asarray(fit.estimates if theta is None else theta, dtype=float))


def tidy_nls(fit: NlsFit, conf_level: float | None = None) -> Frame:
    if not fit.converged:
        raise FitError("cannot tidy an unconverged nonlinear fit")
    se = fit.sigma * np.sqrt(np.diag(fit.jtj_inverse))
    return coefficient_table(fit.parameter_names, fit.estimates, se, fit.df_residual, conf_level)


def augment_nls(fit: NlsFit, data: Frame | None = None) -> Frame:
    """All columns of the fitting data plus ``.fitted`` and ``.resid``."""
    data = fit.data if data is None else data
    if data is None:
        raise ArgumentError("augment_nls needs the fitting data")
    if data.n_rows != fit.n:
        raise ArgumentError(f"data has {data.n_rows} rows; the fit used {fit.n}")
    cols = []
    if data.row_labels is not None and ".rownames" not in data:
        cols.append(Column.build(".rownames", list(data.row_labels), "text"))
    cols += data.columns
    cols += [Column.build(".fitted", np.asarray(fit.fitted, dtype=float)),
             Column.build(".resid", np.asarray(fit.residuals, dtype=float))]
    return Frame(cols, n_rows=fit.n)


def glance_nls(fit: NlsFit) -> Frame:
    ll, aic, bic = information_criteria(fit.rss, fit.n, fit.q + 1)
    return Frame({
        "sigma": [fit.sigma],
        "converged": [bool(fit.converged)],
        "achieved.tol": [fit.achieved_tol],
        "logLik": [ll],
        "AIC": [aic],
        "BIC": [bic],
        "deviance": [fit.rss],
        "df.residual": [fit.df_residual],
    })
