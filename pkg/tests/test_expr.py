import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medianqs.errors import DomainError, ExpressionSyntaxError, NotDifferentiableError, UnknownIdentifierError
from medianqs.expr import (
    Add,
    Const,
    Div,
    Func,
    Mul,
    Neg,
    Pow,
    Sub,
    Var,
    compose,
    evaluate,
    gradient,
    lambdify,
    parse,
    rotate,
    to_text,
)


def test_parse_variable():
    assert parse("x") == Var("x")


def test_sum_of_squares_on_equator():
    e = parse("x^2+y^2")
    assert evaluate(e, [2**-0.5, 2**-0.5, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x^2+*y")
    assert info.value.offset == 4


@pytest.mark.parametrize(
    "text, offset",
    [("x+", 2), ("x^y", 2), ("x^2^3", 3), ("(x", 2), ("x)", 1), ("", 0), ("2x", 1), ("x^1.5", 2)],
)
def test_syntax_errors(text, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


@pytest.mark.parametrize("text", ["w", "foo(x)", "pi"])
def test_unknown_identifier(text):
    with pytest.raises(UnknownIdentifierError):
        parse(text)


def test_precedence():
    assert parse("-x^2") == Neg(Pow(Var("x"), 2))
    assert parse("1+2*x") == Add(Const(1.0), Mul(Const(2.0), Var("x")))
    assert parse("x-y-z") == Sub(Sub(Var("x"), Var("y")), Var("z"))
    assert parse("x/y/z") == Div(Div(Var("x"), Var("y")), Var("z"))


def test_evaluate_examples():
    assert evaluate("x", [0.0, 0.0, 1.0]) == 0.0
    assert evaluate("2*z^2+x", [1.0, 0.0, 0.0]) == 1.0
    rng = np.random.default_rng(0)
    v = rng.normal(size=(50, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.allclose(evaluate("x^2+y^2+z^2", v), 1.0, atol=1e-14)


def test_evaluate_is_deterministic():
    e = parse("sin(x*y) + exp(z)/(2+cos(x))")
    p = np.array([0.3, -0.4, 0.866])
    assert evaluate(e, p) == evaluate(e, p)


@pytest.mark.parametrize("text, point", [("sqrt(x)", [-1, 0, 0]), ("1/x", [0, 1, 0]), ("x^-2", [0, 0, 1]), ("log(z)", [1, 0, 0])])
def test_domain_errors(text, point):
    with pytest.raises(DomainError):
        evaluate(text, point)


def test_gradient_examples():
    assert gradient("x") == (Const(1.0), Const(0.0), Const(0.0))
    gx, gy, gz = gradient("x^2+y^2")
    p = np.array([0.3, -0.7, 0.2])
    assert evaluate(gx, p) == pytest.approx(0.6)
    assert evaluate(gy, p) == pytest.approx(-1.4)
    assert gz == Const(0.0)


def test_abs_not_differentiable():
    with pytest.raises(NotDifferentiableError):
        gradient("abs(x) + y")


def _random_smooth(rng, depth):
    """Random expression that is smooth and finite near the unit sphere."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return Var(str(rng.choice(["x", "y", "z"])))
        return Const(float(np.round(rng.uniform(-2, 2), 3)))
    a = _random_smooth(rng, depth - 1)
    kind = rng.integers(10)
    if kind < 5:
        b = _random_smooth(rng, depth - 1)
        return [Add, Sub, Mul, Mul, Add][kind](a, b)
    if kind == 5:
        return Pow(a, int(rng.integers(2, 4)))
    if kind == 6:
        return Func(str(rng.choice(["sin", "cos"])), a)
    if kind == 7:
        return Func("exp", Func("sin", a))
    if kind == 8:
        return Div(a, Add(Const(2.5), Func("cos", _random_smooth(rng, depth - 1))))
    return Func(str(rng.choice(["sqrt", "log"])), Add(Const(2.0), Func("sin", a)))


def _central(e, p, h):
    out = np.empty(3)
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        out[k] = (evaluate(e, p + d) - evaluate(e, p - d)) / (2 * h)
    return out


def test_gradient_matches_finite_differences():
    # central differences at h and 2h, combined by one Richardson step so
    # that quickly oscillating expressions do not fail on truncation error
    rng = np.random.default_rng(1234)
    h = 1e-5
    worst = 0.0
    for _ in range(1000):
        e = _random_smooth(rng, 6)
        p = rng.normal(size=3)
        p /= np.linalg.norm(p)
        g = np.array([evaluate(gi, p) for gi in gradient(e)])
        fd = (4.0 * _central(e, p, h) - _central(e, p, 2 * h)) / 3.0
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(g), 1.0))))
    assert worst < 1e-6


@st.composite
def expressions(draw, depth=4):
    if depth == 0 or draw(st.integers(0, 4)) == 0:
        if draw(st.booleans()):
            return Var(draw(st.sampled_from(["x", "y", "z"])))
        return Const(draw(st.floats(-100, 100, allow_nan=False).map(lambda v: round(v, 4))))
    kind = draw(st.integers(0, 7))
    a = draw(expressions(depth=depth - 1))
    if kind == 0:
        return Neg(a)
    if kind == 1:
        return Pow(a, draw(st.integers(-3, 4)))
    if kind == 2:
        return Func(draw(st.sampled_from(["sin", "cos", "exp", "sqrt", "abs", "log"])), a)
    b = draw(expressions(depth=depth - 1))
    return [Add, Sub, Mul, Div, Add][kind - 3](a, b)


@settings(max_examples=300, deadline=None)
@given(expressions())
def test_print_parse_round_trip(e):
    once = parse(to_text(e))
    assert parse(to_text(once)) == once


@settings(max_examples=200, deadline=None)
@given(expressions())
def test_printed_text_evaluates_identically(e):
    p = np.array([0.36, 0.48, 0.8])
    try:
        want = evaluate(e, p)
    except DomainError:
        return
    got = evaluate(parse(to_text(e)), p)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12, nan_ok=True)


@settings(max_examples=200, deadline=None)
@given(expressions())
def test_lambdify_matches_tree(e):
    pts = np.array([[0.36, 0.48, 0.8], [0.0, 0.6, -0.8], [1.0, 0.0, 0.0]])
    try:
        want = evaluate(e, pts)
    except DomainError:
        with pytest.raises(DomainError):
            with np.errstate(all="ignore"):
                lambdify(e)(pts[:, 0], pts[:, 1], pts[:, 2])
        return
    with np.errstate(all="ignore"):
        got = np.broadcast_to(lambdify(e)(pts[:, 0], pts[:, 1], pts[:, 2]), (3,))
    np.testing.assert_array_equal(got, want)


def test_compose_and_rotate():
    f = parse("x^2 + y")
    u = parse("x^3 - 1")
    p = np.array([0.6, 0.0, 0.8])
    assert evaluate(compose(u, f), p) == pytest.approx(0.36**3 - 1)
    R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert evaluate(rotate(f, R), p) == pytest.approx(evaluate(f, R @ p))
