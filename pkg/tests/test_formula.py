import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from tidyfit.errors import (
    ArgumentError, ColumnTypeError, FormulaSyntaxError, SchemaError, UnsupportedError,
)
from tidyfit.formula import (
    BinOp, Call, Const, LinearFormula, Neg, NlsFormula, Sym, design_matrix, differentiate, eval_expr,
    parse_expr, parse_formula, to_text,
)
from tidyfit.frame import Frame

NAMES = ["x", "wt", "k", "b", "theta_1"]


def test_parse_linear():
    f = parse_formula("mpg ~ wt + qsec")
    assert isinstance(f, LinearFormula)
    assert f.term_names == ("wt", "qsec") and f.response == Sym("mpg")


def test_parse_log10_response():
    f = parse_formula("log10(salary) ~ average + yearID")
    assert f.response == Call("log10", Sym("salary"))


def test_parse_nls():
    f = parse_formula("mpg ~ k / wt + b", start={"k": 1, "b": 0})
    assert isinstance(f, NlsFormula)
    assert f.parameter_names == ["k", "b"]
    assert f.rhs == BinOp("+", BinOp("/", Sym("k"), Sym("wt")), Sym("b"))


@pytest.mark.parametrize("text", ["mpg ~ wt ~ qsec", "mpg wt", "mpg ~ (wt", "mpg ~ wt +", "~ wt", "mpg ~ 2 3"])
def test_syntax_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text)


def test_syntax_error_offset():
    with pytest.raises(FormulaSyntaxError) as e:
        parse_formula("mpg ~ wt + $")
    assert e.value.offset == 11


def test_unknown_function_and_splines():
    with pytest.raises(FormulaSyntaxError, match="unknown function"):
        parse_formula("y ~ sin(x)")
    with pytest.raises(UnsupportedError, match="spline basis"):
        parse_formula("y ~ ns(x, 3)")
    with pytest.raises(UnsupportedError):
        parse_formula("y ~ x - 1")


def test_precedence():
    assert parse_expr("a + b * c") == BinOp("+", Sym("a"), BinOp("*", Sym("b"), Sym("c")))
    assert parse_expr("a - b - c") == BinOp("-", BinOp("-", Sym("a"), Sym("b")), Sym("c"))
    assert parse_expr("a ^ b ^ c") == BinOp("^", Sym("a"), BinOp("^", Sym("b"), Sym("c")))
    assert parse_expr("-a ^ 2") == Neg(BinOp("^", Sym("a"), Const(2.0)))


def test_design_matrix_examples(mtcars):
    y, X, names = design_matrix(parse_formula("mpg ~ wt + qsec"), mtcars)
    assert X.shape == (32, 3) and names == ("(Intercept)", "wt", "qsec")
    f = Frame({"x": [0.0, 1.0], "y": [3.0, 5.0]})
    y, X, _ = design_matrix(parse_formula("y ~ x"), f)
    assert X.tolist() == [[1.0, 0.0], [1.0, 1.0]] and y.tolist() == [3.0, 5.0]
    s = Frame({"s": [1.0, 10.0, 100.0], "x": [1.0, 2.0, 3.0]})
    y, _, _ = design_matrix(parse_formula("log10(s) ~ x"), s)
    assert y.tolist() == [0.0, 1.0, 2.0]


def test_design_matrix_errors():
    f = Frame({"x": [1.0, 2.0], "t": ["a", "b"], "y": [1.0, None]})
    with pytest.raises(SchemaError):
        design_matrix(parse_formula("x ~ nope"), f)
    with pytest.raises(ColumnTypeError):
        design_matrix(parse_formula("x ~ t"), f)
    with pytest.raises(ColumnTypeError):
        design_matrix(parse_formula("y ~ x"), f)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=10),
       st.integers(1, 3))
def test_design_matrix_shape_and_intercept(rows, nterms):
    f = Frame({"a": [r[0] for r in rows], "b": [r[1] for r in rows], "c": [r[2] for r in rows]})
    terms = ["a", "b", "c"][:nterms]
    y, X, names = design_matrix(parse_formula("a ~ " + " + ".join(terms)), f)
    assert X.shape[1] == 1 + nterms and np.all(X[:, 0] == 1.0)


def test_eval_examples():
    v = eval_expr(parse_expr("k/wt + b"), {"k": 45.829, "b": 4.386, "wt": np.array([2.620])})
    assert v[0] == pytest.approx(45.829 / 2.620 + 4.386)
    assert eval_expr(Const(7.0), {}, n=3).tolist() == [7.0, 7.0, 7.0]
    assert eval_expr(parse_expr("sqrt(4)"), {}) == 2.0
    with pytest.raises(SchemaError):
        eval_expr(parse_expr("a + 1"), {})
    assert math.isinf(eval_expr(parse_expr("1/x"), {"x": 0.0}))
    assert math.isnan(eval_expr(parse_expr("log(x)"), {"x": -1.0}))


def test_differentiate_examples():
    e = parse_expr("k/wt + b")
    assert differentiate(e, "k") == BinOp("/", Const(1.0), Sym("wt"))
    assert differentiate(e, "b") == Const(1.0)
    g = differentiate(parse_expr("exp(k*x)"), "k")
    x = np.array([0.3, 1.2])
    assert np.allclose(eval_expr(g, {"k": 0.7, "x": x}), x * np.exp(0.7 * x))
    with pytest.raises(ArgumentError):
        differentiate(e, "log")
    with pytest.raises(UnsupportedError):
        differentiate(parse_expr("x^k"), "k")


# -- property tests --------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from(NAMES).map(Sym),
    st.integers(0, 1000).map(lambda v: Const(float(v))),
    st.floats(0, 1e6, allow_nan=False).map(Const),
)


def _node(children):
    return st.one_of(
        children.map(Neg),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(Call, st.sampled_from(["log", "log10", "exp", "sqrt"]), children),
    )


trees = st.recursive(_leaf, _node, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse_expr(to_text(tree)) == tree


# smooth trees over positive values, so finite differences are meaningful
_pos_leaf = st.one_of(
    st.sampled_from(["x", "t1", "t2"]).map(Sym),
    st.floats(0.5, 5).map(Const),
)


def _pos_node(children):
    return st.one_of(
        st.builds(BinOp, st.sampled_from(["+", "*", "/"]), children, children),
        st.builds(lambda c, p: BinOp("^", c, Const(p)), children, st.sampled_from([2.0, 0.5, -1.0, 3.0])),
        children.map(lambda c: Call("sqrt", c)),
        children.map(lambda c: Call("exp", BinOp("/", c, Const(10.0)))),
        children.map(lambda c: Call("log", BinOp("+", c, Const(1.0)))),
        children.map(lambda c: Call("log10", BinOp("+", c, Const(1.0)))),
    )


smooth = st.recursive(_pos_leaf, _pos_node, max_leaves=8).flatmap(
    lambda t: st.sampled_from([t, Neg(t), BinOp("-", t, Sym("t1"))]))


@settings(max_examples=300, deadline=None)
@given(smooth, st.sampled_from(["t1", "t2"]),
       st.floats(0.1, 10), st.floats(0.1, 10), st.lists(st.floats(0.1, 10), min_size=1, max_size=4))
def test_symbolic_derivative_matches_central_difference(tree, wrt, t1, t2, xs):
    x = np.array(xs)
    env = {"x": x, "t1": t1, "t2": t2}
    theta = env[wrt]
    h = 1e-6 * max(1.0, abs(theta))
    value = eval_expr(tree, env, len(x))
    assume(np.all(np.isfinite(value)) and np.max(np.abs(value)) < 1e6)
    sym = eval_expr(differentiate(tree, wrt), env, len(x))
    up = eval_expr(tree, {**env, wrt: theta + h}, len(x))
    dn = eval_expr(tree, {**env, wrt: theta - h}, len(x))
    fd = (up - dn) / (2 * h)
    assert np.all(np.abs(sym - fd) <= 1e-5 * np.maximum(1.0, np.abs(sym)))
