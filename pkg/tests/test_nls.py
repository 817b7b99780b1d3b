import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from tidyfit.errors import (
    ArgumentError, BadStartError, ConvergenceError, FitError, SchemaError, SingularGradientError,
)
from tidyfit.formula import differentiate, eval_expr, parse_formula
from tidyfit.frame import Frame
from tidyfit.linreg import fit_ols, tidy_lm
from tidyfit.nls import augment_nls, fit_nls, glance_nls, nls_jacobian, tidy_nls

NLS = "mpg ~ k/wt + b"


@pytest.fixture(scope="module")
def nfit(mtcars):
    return fit_nls(NLS, mtcars, start={"k": 1, "b": 0})


def test_mtcars_summary(nfit):
    t = tidy_nls(nfit)
    assert t["term"].tolist() == ["k", "b"]
    assert t["estimate"].tolist() == pytest.approx([45.829, 4.386], rel=1e-3)
    assert t["std.error"].tolist() == pytest.approx([4.249, 1.536], rel=1e-3)
    assert t["statistic"][0] == pytest.approx(10.786, rel=1e-4)
    assert t["p.value"][0] == pytest.approx(7.64e-12, rel=1e-3)
    assert nfit.sigma == pytest.approx(2.774, rel=1e-3)
    assert nfit.df_residual == 30 and nfit.iterations == 1 and nfit.converged


def test_start_at_optimum(mtcars, nfit):
    again = fit_nls(NLS, mtcars, start=dict(zip(nfit.parameter_names, nfit.estimates.tolist())))
    assert again.converged and again.iterations == 1
    assert again.achieved_tol < 1e-10
    assert np.allclose(again.estimates, nfit.estimates, rtol=1e-12)


def test_augment(mtcars, nfit):
    a = augment_nls(nfit)
    assert a.n_rows == 32 and a.names[-2:] == [".fitted", ".resid"]
    assert a.names[0] == ".rownames"
    i = int(np.flatnonzero(a["wt"] == 1.513)[0])
    assert a[".fitted"][i] == pytest.approx(45.829 / 1.513 + 4.386, rel=1e-4)
    assert np.allclose(a[".fitted"] + a[".resid"], a["mpg"], rtol=1e-14)
    with pytest.raises(ArgumentError):
        augment_nls(nfit, mtcars.head(5))


def test_glance(nfit):
    g = glance_nls(nfit)
    assert g.names == ["sigma", "converged", "achieved.tol", "logLik", "AIC", "BIC", "deviance", "df.residual"]
    assert g["sigma"][0] == pytest.approx(2.774, rel=1e-3) and g["df.residual"][0] == 30
    assert g["deviance"][0] == pytest.approx(float(nfit.residuals @ nfit.residuals), rel=1e-14)
    assert g["AIC"][0] - g["BIC"][0] == pytest.approx((2 - math.log(32)) * 3, rel=1e-12)


def test_matches_ols_on_induced_design(mtcars, nfit):
    wt, mpg = mtcars.numeric("wt"), mtcars.numeric("mpg")
    ols = tidy_lm(fit_ols(np.column_stack([1 / wt, np.ones(32)]), mpg, ["k", "b"]))
    t = tidy_nls(nfit)
    assert np.allclose(t["estimate"], ols["estimate"], rtol=1e-8, atol=0)
    assert np.allclose(t["std.error"], ols["std.error"], rtol=1e-8, atol=0)


def test_one_parameter_exact_fit():
    f = Frame({"x": [1.0, 2.0, 3.0], "y": [2.0, 4.0, 6.0]})
    fit = fit_nls("y ~ a*x", f, start={"a": 1})
    t = tidy_nls(fit)
    assert t["estimate"][0] == pytest.approx(2.0) and t["p.value"][0] == 0.0


# -- errors ----------------------------------------------------------------------


def _expdata():
    x = np.linspace(0, 1, 20)
    return Frame({"x": x, "y": 2.0 * np.exp(1.5 * x) + 0.01 * np.sin(40 * x)})


def test_convergence_error_carries_last_iterate():
    with pytest.raises(ConvergenceError) as e:
        fit_nls("y ~ a*exp(b*x)", _expdata(), start={"a": 1, "b": 0}, max_iter=1)
    assert set(e.value.last) == {"a", "b"}
    fit = fit_nls("y ~ a*exp(b*x)", _expdata(), start={"a": 1, "b": 0}, max_iter=1, raise_on_failure=False)
    assert not fit.converged
    with pytest.raises(FitError):
        tidy_nls(fit)


def test_singular_gradient():
    with pytest.raises(SingularGradientError):
        fit_nls("y ~ a*b*x", _expdata(), start={"a": 1, "b": 1})


def test_bad_start():
    with pytest.raises(BadStartError):
        fit_nls("y ~ log(a*x + 1)", _expdata(), start={"a": -5})


def test_binding_errors(mtcars):
    with pytest.raises(ArgumentError):
        fit_nls("mpg ~ wt/k", mtcars, start={"k": 1, "wt": 1})
    with pytest.raises(SchemaError):
        fit_nls("mpg ~ k/nope", mtcars, start={"k": 1})
    with pytest.raises(ArgumentError):
        fit_nls("mpg ~ k/wt", mtcars, start={"k": 1, "c": 2})


# -- properties --------------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(6, 40))
def test_linear_in_parameters_agrees_with_ols(seed, n):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(0.1, 10, n), rng.uniform(0.1, 3, n)
    y = 3 * x1 - 2 * np.exp(x2) + 5 + rng.normal(0, 1, n)
    f = Frame({"x1": x1, "x2": x2, "y": y})
    fit = fit_nls("y ~ a*x1 + c*exp(x2) + d", f, start={"a": 0, "c": 0, "d": 0})
    X = np.column_stack([x1, np.exp(x2), np.ones(n)])
    ols = tidy_lm(fit_ols(X, y, ["a", "c", "d"]))
    t = tidy_nls(fit)
    assert fit.iterations == 1
    assert np.allclose(t["estimate"], ols["estimate"], rtol=1e-8, atol=1e-12)
    assert np.allclose(t["std.error"], ols["std.error"], rtol=1e-8, atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 5), st.floats(-2, 2), st.floats(0.2, 2), st.floats(-1, 1))
def test_gauss_newton_properties(seed, A, B, a0, b0):
    rng = np.random.default_rng(seed)
    n = 25
    x = np.sort(rng.uniform(0, 2, n))
    y = A * np.exp(B * x) + rng.normal(0, 0.05, n)
    f = Frame({"x": x, "y": y})
    formula = parse_formula("y ~ a*exp(b*x)", start={"a": a0, "b": b0})
    try:
        fit = fit_nls(formula, f, raise_on_failure=False)
    except SingularGradientError:
        assume(False)
    # step halving never accepts an increase
    rss = [r for _, r in fit.history]
    assert all(b <= a for a, b in zip(rss, rss[1:]))
    # the symbolic Jacobian matches central differences at every accepted iterate
    for theta, _ in fit.history:
        J = nls_jacobian(fit, np.array(theta))
        for j, name in enumerate(fit.parameter_names):
            h = 1e-6 * max(1.0, abs(theta[j]))
            env = {"x": x, **dict(zip(fit.parameter_names, theta))}
            up = eval_expr(formula.rhs, {**env, name: theta[j] + h}, n)
            dn = eval_expr(formula.rhs, {**env, name: theta[j] - h}, n)
            fd = (up - dn) / (2 * h)
            assume(np.all(np.isfinite(fd)))
            assert np.all(np.abs(J[:, j] - fd) <= 1e-5 * np.maximum(1.0, np.abs(J[:, j])))
    if fit.converged:
        assert fit.achieved_tol <= fit.tol
        J = nls_jacobian(fit)
        r = fit.residuals
        assert np.max(np.abs(J.T @ r)) <= 1e-6 * np.linalg.norm(r) * np.max(np.sum(np.abs(J), axis=1))
