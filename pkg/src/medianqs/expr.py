"""Closed-form observables F(x, y, z): parsing, evaluation, exact gradients.

Grammar (loosest to tightest binding)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' ['-'] INTEGER)?
    atom    := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

Exponents are integer literals only and implicit multiplication is not
accepted, so ``2x`` and ``x^0.5`` are both syntax errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import (
    DomainError,
    ExpressionSyntaxError,
    NotDifferentiableError,
    UnknownIdentifierError,
)

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")


class Expression:
    """Immutable expression tree node. Subclasses are frozen dataclasses."""

    def __call__(self, x, y, z):
        return self._eval({"x": x, "y": y, "z": z})

    def _eval(self, env):
        raise NotImplementedError

    def _diff(self, var: str) -> "Expression":
        raise NotImplementedError

    def __str__(self) -> str:
        return to_text(self)

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __truediv__(self, other):
        return Div(self, _wrap(other))

    def __rtruediv__(self, other):
        return Div(_wrap(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return Pow(self, int(n))


def _wrap(value) -> Expression:
    if isinstance(value, Expression):
        return value
    return Const(float(value))


@dataclass(frozen=True, eq=True)
class Const(Expression):
    value: float

    def _eval(self, env):
        return self.value

    def _diff(self, var):
        return ZERO


@dataclass(frozen=True, eq=True)
class Var(Expression):
    name: str

    def _eval(self, env):
        return env[self.name]

    def _diff(self, var):
        return ONE if var == self.name else ZERO


@dataclass(frozen=True, eq=True)
class Neg(Expression):
    arg: Expression

    def _eval(self, env):
        return -self.arg._eval(env)

    def _diff(self, var):
        return neg(self.arg._diff(var))


@dataclass(frozen=True, eq=True)
class Add(Expression):
    left: Expression
    right: Expression

    def _eval(self, env):
        return self.left._eval(env) + self.right._eval(env)

    def _diff(self, var):
        return add(self.left._diff(var), self.right._diff(var))


@dataclass(frozen=True, eq=True)
class Sub(Expression):
    left: Expression
    right: Expression

    def _eval(self, env):
        return self.left._eval(env) - self.right._eval(env)

    def _diff(self, var):
        return sub(self.left._diff(var), self.right._diff(var))


@dataclass(frozen=True, eq=True)
class Mul(Expression):
    left: Expression
    right: Expression

    def _eval(self, env):
        return self.left._eval(env) * self.right._eval(env)

    def _diff(self, var):
        return add(
            mul(self.left._diff(var), self.right),
            mul(self.left, self.right._diff(var)),
        )


@dataclass(frozen=True, eq=True)
class Div(Expression):
    left: Expression
    right: Expression

    def _eval(self, env):
        den = self.right._eval(env)
        if np.any(np.asarray(den) == 0):
            raise DomainError(f"division by zero in {to_text(self)}")
        return self.left._eval(env) / den

    def _diff(self, var):
        # (u/v)' = u'/v - u v' / v^2
        du = self.left._diff(var)
        dv = self.right._diff(var)
        return sub(div(du, self.right), div(mul(self.left, dv), power(self.right, 2)))


@dataclass(frozen=True, eq=True)
class Pow(Expression):
    base: Expression
    exponent: int

    def _eval(self, env):
        b = self.base._eval(env)
        if self.exponent < 0:
            if np.any(np.asarray(b) == 0):
                raise DomainError(f"division by zero in {to_text(self)}")
            return 1.0 / b ** (-self.exponent)
        return b**self.exponent

    def _diff(self, var):
        n = self.exponent
        return mul(mul(Const(float(n)), power(self.base, n - 1)), self.base._diff(var))


def _checked_sqrt(a):
    if np.any(np.asarray(a) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(a)


def _checked_log(a):
    if np.any(np.asarray(a) <= 0):
        raise DomainError("log of a non-positive number")
    return np.log(a)


_NUMERIC: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": _checked_log,
    "sqrt": _checked_sqrt,
    "abs": np.abs,
}


@dataclass(frozen=True, eq=True)
class Func(Expression):
    name: str
    arg: Expression

    def _eval(self, env):
        value = _NUMERIC[self.name](self.arg._eval(env))
        if isinstance(value, np.ndarray) and value.ndim == 0:
            return float(value)
        return value

    def _diff(self, var):
        u = self.arg
        du = u._diff(var)
        if self.name == "sin":
            outer = func("cos", u)
        elif self.name == "cos":
            outer = neg(func("sin", u))
        elif self.name == "exp":
            outer = func("exp", u)
        elif self.name == "log":
            outer = div(ONE, u)
        elif self.name == "sqrt":
            outer = div(ONE, mul(Const(2.0), func("sqrt", u)))
        else:
            raise NotDifferentiableError(f"{self.name} is not differentiable: {to_text(self)}")
        return mul(outer, du)


ZERO = Const(0.0)
ONE = Const(1.0)


# Folding constructors used by differentiation. Folding stops at constants.


def _is_const(e, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def power(a, n: int):
    if n == 0:
        return ONE
    if n == 1:
        return a
    if _is_const(a) and (a.value != 0.0 or n > 0):
        return Const(a.value**n)
    return Pow(a, n)


def func(name, a):
    return Func(name, a)


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def fail(self, message: str):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionSyntaxError(f"{message}, found {found}", t.offset)

    def expect(self, op: str):
        if self.tok.kind != "op" or self.tok.text != op:
            self.fail(f"expected {op!r}")
        self.advance()

    def parse(self) -> Expression:
        e = self.expr()
        if self.tok.kind != "end":
            self.fail("unexpected token")
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            arg = self.unary()
            # keeps printed negative literals round-trippable
            return Const(-arg.value) if isinstance(arg, Const) else Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                self.advance()
                sign = -1
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                self.fail("exponent must be an integer literal")
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "^":
                self.fail("chained exponents need parentheses")
            return Pow(base, sign * int(t.text))
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in VARIABLES:
                if self.tok.kind == "op" and self.tok.text == "(":
                    self.fail(f"{t.text!r} is not a function")
                return Var(t.text)
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(t.text, arg)
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expected a number, variable, function or '('")


def parse(text: str) -> Expression:
    """Parse observable text into an :class:`Expression`."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text).parse()


def as_expression(e) -> Expression:
    if isinstance(e, Expression):
        return e
    if isinstance(e, str):
        return parse(e)
    return Const(float(e))


# ---------------------------------------------------------------- printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e) -> int:
    if isinstance(e, Const):
        return 3 if (e.value < 0 or math.copysign(1.0, e.value) < 0) else 5
    return _PREC.get(type(e), 5)


def _fmt_number(v: float) -> str:
    if v == 0:
        return "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expression) -> str:
    """Canonical text with the minimal parentheses needed to re-parse to the same tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _prec(e.arg) < 3 or isinstance(e.arg, Const):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    p = _PREC[type(e)]
    left = to_text(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_text(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


# ---------------------------------------------------------------- operations


def evaluate(e, p):
    """Evaluate at a point ``p`` (shape (3,)) or a batch of points (shape (..., 3))."""
    e = as_expression(e)
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError("evaluation point is not finite")
    with np.errstate(all="ignore"):
        out = e(p[..., 0], p[..., 1], p[..., 2])
    if p.ndim == 1:
        return float(out)
    return np.broadcast_to(np.asarray(out, dtype=float), p.shape[:-1]).copy()


def gradient(e) -> tuple[Expression, Expression, Expression]:
    """Exact symbolic partial derivatives (d/dx, d/dy, d/dz)."""
    e = as_expression(e)
    return tuple(e._diff(v) for v in VARIABLES)


def substitute(e, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions (used for compositions and rotations)."""
    e = as_expression(e)
    mapping = {k: as_expression(v) for k, v in mapping.items()}

    def go(n):
        if isinstance(n, Var):
            return mapping.get(n.name, n)
        if isinstance(n, Const):
            return n
        if isinstance(n, (Neg, Func)):
            arg = go(n.arg)
            return Neg(arg) if isinstance(n, Neg) else Func(n.name, arg)
        if isinstance(n, Pow):
            return Pow(go(n.base), n.exponent)
        return type(n)(go(n.left), go(n.right))

    return go(e)


def compose(u, f) -> Expression:
    """``u o f`` where ``u`` is written in the single variable ``x``."""
    return substitute(u, {"x": as_expression(f)})


def rotate(e, R) -> Expression:
    """Return F o R for a 3x3 rotation matrix R (maps v to R v)."""
    R = np.asarray(R, dtype=float)
    xs = [Var(v) for v in VARIABLES]
    rows = []
    for i in range(3):
        row = Mul(Const(float(R[i, 0])), xs[0])
        for j in (1, 2):
            row = Add(row, Mul(Const(float(R[i, j])), xs[j]))
        rows.append(row)
    return substitute(e, dict(zip(VARIABLES, rows)))


def is_differentiable(e) -> bool:
    e = as_expression(e)
    if isinstance(e, Func):
        return e.name != "abs" and is_differentiable(e.arg)
    if isinstance(e, (Neg,)):
        return is_differentiable(e.arg)
    if isinstance(e, Pow):
        return is_differentiable(e.base)
    if isinstance(e, (Add, Sub, Mul, Div)):
        return is_differentiable(e.left) and is_differentiable(e.right)
    return True


def _checked_div(a, b):
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _source(e: Expression) -> str:
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_source(e.arg)})"
    if isinstance(e, Func):
        return f"_f_{e.name}({_source(e.arg)})"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"_div(1.0, {_source(e.base)} ** {-e.exponent})"
        return f"({_source(e.base)} ** {e.exponent})"
    if isinstance(e, Div):
        return f"_div({_source(e.left)}, {_source(e.right)})"
    op = {Add: "+", Sub: "-", Mul: "*"}[type(e)]
    return f"({_source(e.left)} {op} {_source(e.right)})"


_LAMBDA_ENV = {"_div": _checked_div, **{f"_f_{k}": v for k, v in _NUMERIC.items()}}


def lambdify(e) -> Callable:
    """Compile to a plain function of coordinate arrays ``(x, y, z)``.

    Same values and domain errors as calling the tree, without the per-node
    dispatch; meant for inner loops.
    """
    e = as_expression(e)
    return eval(f"lambda x, y, z: {_source(e)}", dict(_LAMBDA_ENV))
