from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from diffbound import expr as ex
from diffbound.errors import (ExprDomainError, ExprSyntaxError, UnboundParameterError,
                              UnknownFunctionError)


def test_parse_negation():
    assert ex.parse("-y") == ex.Neg(ex.Var())


def test_parse_affine_drift():
    assert ex.parse("p*y + q") == ex.Add(ex.Mul(ex.Param("p"), ex.Var()), ex.Param("q"))


@pytest.mark.parametrize("text, position", [("y +", 3), ("", 0), ("(y", 2), ("y )", 2), ("2 $ y", 2)])
def test_syntax_error_position(text, position):
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse(text)
    assert info.value.position == position
    assert f"position {position}" in str(info.value)


def test_unknown_function():
    with pytest.raises(UnknownFunctionError):
        ex.parse("tanh(y)")


def test_wrong_arity():
    with pytest.raises(ExprSyntaxError):
        ex.parse("min(y)")


def test_precedence():
    # power binds tighter than unary minus, which binds tighter than * and +
    assert ex.evaluate(ex.parse("-y^2"), 3.0) == -9.0
    assert ex.evaluate(ex.parse("2*3+4"), 0.0) == 10.0
    assert ex.evaluate(ex.parse("2^3^2"), 0.0) == 512.0
    assert ex.evaluate(ex.parse("y**2"), 3.0) == 9.0
    assert ex.evaluate(ex.parse("8/2/2"), 0.0) == 2.0
    assert ex.evaluate(ex.parse("1-2-3"), 0.0) == -4.0


def test_exponent_must_be_constant():
    with pytest.raises(ExprSyntaxError):
        ex.parse("2^y")


def test_eval_examples():
    assert ex.evaluate(ex.parse("-y"), 2.0) == -2.0
    assert ex.evaluate(ex.parse("p*y + q"), 1.0, {"p": 1.0, "q": 2.5}) == 3.5


@pytest.mark.parametrize("text, y", [("log(y)", -1.0), ("log(y)", 0.0), ("sqrt(y)", -1.0),
                                     ("1/y", 0.0), ("y^0.5", -2.0)])
def test_domain_errors(text, y):
    with pytest.raises(ExprDomainError):
        ex.evaluate(ex.parse(text), y)


def test_non_strict_gives_nan():
    f = ex.compile_expr(ex.parse("log(y)"), strict=False)
    out = f(np.array([-1.0, 1.0]))
    assert math.isnan(out[0]) and out[1] == 0.0


def test_unbound_parameter():
    with pytest.raises(UnboundParameterError):
        ex.evaluate(ex.parse("p*y"), 1.0)


def test_vectorised_matches_scalar():
    node = ex.parse("max(-c, min(c, -y)) + exp(-y^2)*sin(y)")
    ys = np.linspace(-3, 3, 41)
    f = ex.compile_expr(node, {"c": 1.0})
    np.testing.assert_array_equal(f(ys), [f(float(y)) for y in ys])


def test_derivative_examples():
    assert ex.evaluate(ex.differentiate(ex.parse("-y")), 5.0) == -1.0
    d = ex.differentiate(ex.parse("p*y/2 + c/y"))
    for y in (0.3, 1.0, 2.7):
        assert ex.evaluate(d, y, {"p": 1.0, "c": 2.0}) == pytest.approx(0.5 - 2.0 / y**2, rel=1e-14)


def test_kink_convention_first_argument():
    assert ex.evaluate(ex.differentiate(ex.parse("min(y, c)")), 2.0, {"c": 2.0}) == 1.0
    assert ex.evaluate(ex.differentiate(ex.parse("min(c, y)")), 2.0, {"c": 2.0}) == 0.0
    assert ex.evaluate(ex.differentiate(ex.parse("max(y, c)")), 2.0, {"c": 2.0}) == 1.0
    assert ex.evaluate(ex.differentiate(ex.parse("abs(y)")), 0.0) == 1.0


def test_truncated_drift_prints_as_min_max():
    text = ex.to_string(ex.parse("max(-c, min(c, -y))"))
    assert text == "max(-c, min(c, -y))"


# -- property tests ---------------------------------------------------------

_LEAVES = st.one_of(
    st.just(ex.Var()),
    st.floats(-3, 3, allow_nan=False).map(lambda v: ex.Const(round(v, 3))),
    st.just(ex.Param("a")),
)


def _extend(children):
    unary = st.sampled_from(["exp", "sin", "cos", "abs"])
    return st.one_of(
        st.builds(ex.Neg, children),
        st.builds(ex.Add, children, children),
        st.builds(ex.Sub, children, children),
        st.builds(ex.Mul, children, children),
        st.builds(lambda a, b: ex.Div(a, ex.Add(ex.Const(2.0), ex.Call("cos", b))), children, children),
        st.builds(lambda a, k: ex.Pow(a, ex.Const(float(k))), children, st.integers(0, 3)),
        st.builds(lambda f, a: ex.Call(f, ex.Mul(ex.Const(0.3), a)), unary, children),
        st.builds(ex.Min, children, children),
        st.builds(ex.Max, children, children),
    )


EXPRS = st.recursive(_LEAVES, _extend, max_leaves=8)
PARAMS = {"a": 0.7}


def _kinks_near(node, y, h):
    # min/max/abs switch points make the finite difference meaningless
    for sub in _walk(node):
        if isinstance(sub, (ex.Min, ex.Max)):
            f = ex.compile_expr(ex.Sub(sub.left, sub.right), PARAMS, strict=False)
        elif isinstance(sub, ex.Call) and sub.name == "abs":
            f = ex.compile_expr(sub.arg, PARAMS, strict=False)
        else:
            continue
        vals = [f(y - 2 * h), f(y), f(y + 2 * h)]
        if not all(map(math.isfinite, vals)) or min(vals) <= 0 <= max(vals) or min(map(abs, vals)) < 1e-6:
            return True
    return False


def _walk(node):
    yield node
    for c in ex._children(node):
        yield from _walk(c)


@given(EXPRS, st.floats(-2.5, 2.5))
def test_derivative_matches_finite_difference(node, y):
    h = 1e-5 * max(1.0, abs(y))
    assume(not _kinks_near(node, y, h))
    f = ex.compile_expr(node, PARAMS, strict=False)
    df = ex.compile_expr(ex.differentiate(node), PARAMS, strict=False)
    with np.errstate(all="ignore"):
        vals = [f(y - h), f(y + h), df(y)]
    assume(all(math.isfinite(v) and abs(v) < 1e6 for v in vals))
    fd = (vals[1] - vals[0]) / (2 * h)
    # central differences carry O(h^2 f''') truncation plus O(eps f / h) rounding
    scale = max(1.0, abs(fd), abs(f(y)))
    assert abs(vals[2] - fd) <= 1e-6 * scale + 1e-9 * scale / h


@given(EXPRS, st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_print_parse_round_trip(node, ys):
    again = ex.parse(ex.to_string(node))
    f = ex.compile_expr(node, PARAMS, strict=False)
    g = ex.compile_expr(again, PARAMS, strict=False)
    with np.errstate(all="ignore"):
        a = np.array([f(y) for y in ys])
        b = np.array([g(y) for y in ys])
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12, equal_nan=True)


@given(EXPRS, st.floats(-3, 3))
def test_evaluation_deterministic(node, y):
    f = ex.compile_expr(node, PARAMS, strict=False)
    with np.errstate(all="ignore"):
        a, b = f(y), f(y)
    assert a == b or (math.isnan(a) and math.isnan(b))
