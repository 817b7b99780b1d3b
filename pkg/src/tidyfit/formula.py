"""The model formula mini-language.

``response ~ rhs`` where both sides are arithmetic expressions over column
names (and, for nonlinear models, parameter names). Linear formulas split the
right side on top-level ``+`` into terms; an intercept is always included.

Expression grammar (``^`` binds tighter than unary minus and is right
associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?
    primary := number | name | name "(" expr ")" | "(" expr ")"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

import numpy as np

from .errors import ArgumentError, ColumnTypeError, FormulaSyntaxError, SchemaError, UnsupportedError

FUNCTIONS = {
    "log": np.log,
    "log10": np.log10,
    "exp": np.exp,
    "sqrt": np.sqrt,
}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Const, Sym, Neg, BinOp, Call]


def symbols(expr: Expr) -> list[str]:
    """Symbol names in first-appearance order, without repeats."""
    seen: dict[str, None] = {}

    def walk(e):
        if isinstance(e, Sym):
            seen.setdefault(e.name)
        elif isinstance(e, Neg):
            walk(e.arg)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Call):
            walk(e.arg)

    walk(expr)
    return list(seen)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3
    return 5


def _num(v):
    if v < 0:
        return f"-{_num(-v)}"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Render an expression so that parsing the text gives the same tree."""
    if isinstance(e, Const):
        if not math.isfinite(e.value):
            raise ArgumentError(f"cannot print non-finite constant {e.value}")
        return _num(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return f"-({inner})" if _prec(e.arg) < 3 else f"-{inner}"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= 4:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_.][A-Za-z0-9_.]*)"
    r"|(?P<op>[-+*/^()~,]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    start: int
    end: int


def _tokenize(text):
    toks, pos = [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind), m.end()))
        pos = m.end()
    toks.append(_Tok("end", "", len(text), len(text)))
    return toks


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None, cls=FormulaSyntaxError):
        tok = tok or self.tok
        if cls is FormulaSyntaxError:
            return FormulaSyntaxError(msg, _byte_offset(self.text, tok.start), self.text)
        return cls(f"{msg} at offset {_byte_offset(self.text, tok.start)}")

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def pieces(self):
        """Top-level summands as ``(sign, node, start, end)``."""
        out = []
        sign = "+"
        while True:
            start = self.tok.start
            node = self.term()
            out.append((sign, node, start, self.toks[self.i - 1].end))
            if self.accept("+"):
                sign = "+"
            elif self.accept("-"):
                sign = "-"
            else:
                return out

    def expr(self):
        parts = self.pieces()
        node = parts[0][1]
        for sign, rhs, _, _ in parts[1:]:
            node = BinOp(sign, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while True:
            if self.accept("*"):
                node = BinOp("*", node, self.unary())
            elif self.accept("/"):
                node = BinOp("/", node, self.unary())
            else:
                return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self.accept("("):
                if tok.text == "ns":
                    raise self.error("unsupported: spline basis ns() is not available", tok, UnsupportedError)
                if tok.text not in FUNCTIONS:
                    raise self.error(f"unknown function {tok.text!r} (supported: {', '.join(FUNCTIONS)})", tok)
                arg = self.expr()
                if self.tok.text == ",":
                    raise self.error(f"{tok.text}() takes a single argument")
                self.expect(")")
                return Call(tok.text, arg)
            return Sym(tok.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")

    def done(self):
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")


def parse_expr(text: str) -> Expr:
    """Parse a bare expression (no ``~``)."""
    p = _Parser(text)
    if p.tok.kind == "end":
        raise p.error("empty expression")
    node = p.expr()
    p.done()
    return node


@dataclass(frozen=True)
class LinearFormula:
    response: Expr
    terms: tuple
    term_names: tuple
    text: str = ""
    intercept: bool = True

    @property
    def response_name(self):
        return to_text(self.response)

    def data_symbols(self) -> list[str]:
        """Raw column names used, response first, in appearance order."""
        seen = dict.fromkeys(symbols(self.response))
        for t in self.terms:
            seen.update(dict.fromkeys(symbols(t)))
        return list(seen)


@dataclass(frozen=True)
class NlsFormula:
    response: Expr
    rhs: Expr
    parameters: tuple  # of (name, start value)
    text: str = ""

    @property
    def parameter_names(self) -> list[str]:
        return [n for n, _ in self.parameters]

    @property
    def start(self) -> dict[str, float]:
        return dict(self.parameters)

    def data_symbols(self) -> list[str]:
        params = set(self.parameter_names)
        seen = dict.fromkeys(s for s in symbols(self.response) if s not in params)
        seen.update(dict.fromkeys(s for s in symbols(self.rhs) if s not in params))
        return list(seen)


def parse_formula(text: str, start: Mapping[str, float] | None = None):
    """Parse ``"y ~ ..."``; a ``start`` map makes it a nonlinear formula.

    >>> parse_formula("mpg ~ wt + qsec").term_names
    ('wt', 'qsec')
    """
    p = _Parser(text)
    tildes = [t for t in p.toks if t.text == "~"]
    if len(tildes) != 1:
        where = tildes[1] if len(tildes) > 1 else p.toks[-1]
        raise p.error("formula needs exactly one '~'", where)
    if p.tok.text == "~":
        raise p.error("formula has no response")
    response = p.expr()
    p.expect("~")
    if p.tok.kind == "end":
        raise p.error("formula has no right-hand side")
    if start is None:
        rhs_start = p.i
        pieces = p.pieces()
        p.done()
        terms, names = [], []
        for sign, node, a, b in pieces:
            if sign == "-":
                raise p.error("term removal with '-' is not supported", p.toks[rhs_start], UnsupportedError)
            if not symbols(node):
                if isinstance(node, Const) and node.value == 1.0:
                    continue  # explicit intercept; always present anyway
                raise p.error(f"constant term {text[a:b].strip()!r} is not supported", cls=UnsupportedError)
            terms.append(node)
            names.append(text[a:b].strip())
        return LinearFormula(response, tuple(terms), tuple(names), text)
    rhs = p.expr()
    p.done()
    params = []
    for name, value in dict(start).items():
        value = float(value)
        if not math.isfinite(value):
            raise ArgumentError(f"start value for {name!r} is not finite")
        if name in FUNCTIONS:
            raise ArgumentError(f"parameter name {name!r} shadows a function")
        params.append((name, value))
    if not params:
        raise ArgumentError("a nonlinear formula needs at least one parameter")
    return NlsFormula(response, rhs, tuple(params), text)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


@lru_cache(maxsize=512)
def compile_expr(expr: Expr):
    """Build a closure ``env -> value`` for repeated evaluation of ``expr``."""
    if isinstance(expr, Const):
        v = expr.value
        return lambda env: v
    if isinstance(expr, Sym):
        name = expr.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise SchemaError(f"unbound symbol {name!r}") from None

        return lookup
    if isinstance(expr, Neg):
        f = compile_expr(expr.arg)
        return lambda env: np.negative(f(env))
    if isinstance(expr, Call):
        fn = FUNCTIONS[expr.fn]
        f = compile_expr(expr.arg)
        return lambda env: fn(f(env))
    op = _BINARY[expr.op]
    fl, fr = compile_expr(expr.left), compile_expr(expr.right)
    if expr.op == "^":
        return lambda env: op(np.asarray(fl(env), dtype=float), fr(env))
    return lambda env: op(fl(env), fr(env))


def eval_expr(expr: Expr, bindings: Mapping, n: int | None = None) -> np.ndarray:
    """Evaluate element-wise with IEEE semantics (no warnings, no raising on NaN).

    Scalars broadcast against vectors; pass ``n`` to force a length when every
    binding is scalar.
    """
    with np.errstate(all="ignore"):
        out = np.asarray(compile_expr(expr)(bindings), dtype=np.float64)
    if n is not None and out.shape != (n,):
        out = np.broadcast_to(out, (n,)).copy()
    return out


# ---------------------------------------------------------------------------
# Symbolic differentiation
# ---------------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if _is(a, 0):
        return ZERO
    return Neg(a)


def _pow(a, b):
    if _is(b, 1):
        return a
    if _is(b, 0):
        return ONE
    return BinOp("^", a, b)


@lru_cache(maxsize=1024)
def differentiate(expr: Expr, wrt: str) -> Expr:
    """Symbolic partial derivative of ``expr`` with respect to symbol ``wrt``.

    Powers are handled when the exponent does not depend on ``wrt``.
    """
    if wrt in FUNCTIONS:
        raise ArgumentError(f"cannot differentiate with respect to function name {wrt!r}")
    d = differentiate
    if isinstance(expr, Const):
        return ZERO
    if isinstance(expr, Sym):
        return ONE if expr.name == wrt else ZERO
    if isinstance(expr, Neg):
        return _neg(d(expr.arg, wrt))
    if isinstance(expr, Call):
        u = expr.arg
        du = d(u, wrt)
        if _is(du, 0):
            return ZERO
        if expr.fn == "log":
            return _div(du, u)
        if expr.fn == "log10":
            return _div(du, _mul(u, Call("log", Const(10.0))))
        if expr.fn == "exp":
            return _mul(du, expr)
        if expr.fn == "sqrt":
            return _div(du, _mul(Const(2.0), expr))
        raise ArgumentError(f"no derivative rule for {expr.fn}")
    u, v = expr.left, expr.right
    if expr.op == "^":
        if wrt in symbols(v):
            raise UnsupportedError(f"cannot differentiate a power whose exponent depends on {wrt!r}")
        du = d(u, wrt)
        if _is(du, 0):
            return ZERO
        lower = Const(v.value - 1.0) if isinstance(v, Const) else BinOp("-", v, ONE)
        return _mul(_mul(v, _pow(u, lower)), du)
    du, dv = d(u, wrt), d(v, wrt)
    if expr.op == "+":
        return _add(du, dv)
    if expr.op == "-":
        return _sub(du, dv)
    if expr.op == "*":
        if _is(dv, 0):
            return _mul(du, v)
        if _is(du, 0):
            return _mul(u, dv)
        return _add(_mul(du, v), _mul(u, dv))
    # quotient
    if _is(dv, 0):
        return _div(du, v)
    numerator = _sub(_mul(du, v), _mul(u, dv))
    return _div(numerator, _pow(v, Const(2.0)))


# ---------------------------------------------------------------------------
# Design matrices
# ---------------------------------------------------------------------------


def _column_bindings(frame, names):
    env = {}
    for name in names:
        if name not in frame:
            raise SchemaError(f"formula symbol {name!r} is not a column of the data")
        col = frame.column(name)
        if not col.is_numeric:
            raise ColumnTypeError(f"formula column {name!r} is {col.kind}, not numeric")
        env[name] = frame.numeric(name)
    return env


def design_matrix(formula: LinearFormula, frame):
    """Evaluate a linear formula on a frame.

    Returns ``(y, X, names)``; column 0 of ``X`` is the intercept, named
    ``"(Intercept)"``.
    """
    n = frame.n_rows
    if n < 1:
        raise ArgumentError("cannot build a design matrix from zero rows")
    env = _column_bindings(frame, formula.data_symbols())
    y = eval_expr(formula.response, env, n)
    cols = [np.ones(n)]
    for t in formula.terms:
        cols.append(eval_expr(t, env, n))
    X = np.column_stack(cols)
    names = ("(Intercept)",) + tuple(formula.term_names)
    if not np.all(np.isfinite(y)):
        raise ArgumentError(f"response {formula.response_name!r} has non-finite values")
    bad = ~np.all(np.isfinite(X), axis=0)
    if bad.any():
        raise ArgumentError(f"term {names[int(np.flatnonzero(bad)[0])]!r} has non-finite values")
    return y, X, names
