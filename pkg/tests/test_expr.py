import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sumhess import expr as ex

CORPUS = [
    "1", "x", "-x", "--x", "x+y", "x-y-z", "x-(y-z)", "x*y/z", "x/(y*z)", "x/y/z",
    "2*x^2", "-x^2", "(-x)^2", "2^3^2", "(2^3)^2", "x^-1", "x^(y+1)", "exp(x)+exp(y)",
    "log(1+x^2)", "sin(pi*x)*cos(pi*y)", "sqrt(x^2+y^2)", "abs(x-y)", "min(x,y)^2",
    "max(x, -y)", "ifle(x, y, u, -u)", "e^x", "pi", "3.5e-3*x", "1e10", "0.25",
    "u - (x^2+y^2)/2", "nu_x*x + nu_y*y", "nu_x*(exp(x)+2*x) + nu_y*(exp(y)+2*y) - (u - (exp(x)+exp(y)+x^2+y^2))",
    "((exp(x)+2)*(exp(y)+2) + exp(x)+exp(y)+4)*exp(u-(exp(x)+exp(y)))", "3*exp(-0.3)",
    "-(x+y)*z", "x*(y+z)", "(x*y)*z", "x*(y*z)", "x-(-y)", "x+-y", "-(-(x))", "z^2*t",
    "sin(x)^2+cos(x)^2", "exp(log(x+2))", "max(min(x,y),z)", "-exp(-u)", "x/(-y+2)",
    "abs(-x)^0.5", "1/(1+exp(-u))",
]


def test_corpus_size():
    assert len(CORPUS) == 50


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip(src):
    ast = ex.parse(src)
    text = ex.to_string(ast)
    assert ex.parse(text) == ast
    assert ex.to_string(ex.parse(text)) == text


def test_parse_examples():
    ast = ex.parse("exp(x)+exp(y)")
    assert ast == ex.Bin("+", ex.Call("exp", (ex.Var("x"),)), ex.Call("exp", (ex.Var("y"),)))
    assert ex.parse("2*x^2") == ex.Bin("*", ex.Num(2.0), ex.Bin("^", ex.Var("x"), ex.Num(2.0)))
    assert ex.parse("-x^2") == ex.Neg(ex.Bin("^", ex.Var("x"), ex.Num(2.0)))


@pytest.mark.parametrize(
    "src, offset",
    [("x +* y", 3), ("foo(x)", 0), ("(x", 2), ("", 0), ("x y", 2), ("exp(x,y)", 7), ("2 + é", 4)],
)
def test_syntax_errors(src, offset):
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse(src)
    assert info.value.offset == offset


def test_byte_offsets_after_multibyte():
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse("é")
    assert info.value.offset == 0


def test_eval_examples():
    assert ex.evaluate(ex.parse("x*y"), {"x": 2.0, "y": 3.0}) == 6.0
    assert ex.evaluate(ex.parse("min(x,y)^2"), {"x": 3.0, "y": -2.0}) == 4.0
    with pytest.raises(ex.ExprDomainError):
        ex.evaluate(ex.parse("log(u)"), {"u": -1.0})
    with pytest.raises(ex.ExprDomainError):
        ex.evaluate(ex.parse("1/x"), {"x": np.array([1.0, 0.0])})
    with pytest.raises(ex.ExprDomainError):
        ex.evaluate(ex.parse("sqrt(x)"), {"x": -1.0})


def test_eval_vectorized_and_missing_variable():
    out = ex.evaluate(ex.parse("x+1"), {"x": np.arange(3.0)})
    np.testing.assert_array_equal(out, [1, 2, 3])
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse("w+1")
    with pytest.raises(Exception):
        ex.evaluate(ex.parse("x+y"), {"x": 1.0})


def test_free_variables():
    assert ex.free_variables(ex.parse("x*exp(u)+pi")) == {"x", "u"}


def test_deriv_examples():
    assert ex.to_string(ex.deriv(ex.parse("-u + x"), "u")) == "-1"
    assert ex.to_string(ex.deriv(ex.parse("exp(u)"), "u")) == "exp(u)"
    assert ex.to_string(ex.deriv(ex.parse("x*sin(y)"), "u")) == "0"


def test_deriv_ties_take_left_branch():
    d = ex.deriv(ex.parse("min(u, 1)"), "u")
    assert ex.evaluate(d, {"u": 1.0}) == 1.0
    d = ex.deriv(ex.parse("abs(u)"), "u")
    assert ex.evaluate(d, {"u": 0.0}) in (1.0, -1.0)


SMOOTH = [e for e in CORPUS if not any(f in e for f in ("min", "max", "abs", "ifle"))]


@pytest.mark.parametrize("src", SMOOTH)
def test_deriv_matches_fd(src):
    ast = ex.parse(src)
    env = {"x": 0.7, "y": 0.4, "z": 1.3, "u": 0.9, "t": 0.2, "nu_x": 0.6, "nu_y": -0.8, "nu_z": 0.0}
    for var in ("x", "u"):
        step = 1e-6
        hi, lo = dict(env), dict(env)
        hi[var] += step
        lo[var] -= step
        fd = (ex.evaluate(ast, hi) - ex.evaluate(ast, lo)) / (2 * step)
        an = ex.evaluate(ex.deriv(ast, var), env)
        assert an == pytest.approx(fd, rel=1e-6, abs=1e-6)


_leaf = st.sampled_from(["x", "y", "u", "2", "0.5", "pi"])


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]}){t[1]}({t[2]})"),
        children.map(lambda c: f"-({c})"),
        children.map(lambda c: f"exp(({c})/10)"),
        children.map(lambda c: f"sin({c})"),
    )


@settings(max_examples=150, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=8))
def test_random_round_trip_and_value(src):
    ast = ex.parse(src)
    again = ex.parse(ex.to_string(ast))
    assert again == ast
    env = {"x": 0.3, "y": -0.7, "u": 1.1}
    a, b = ex.evaluate(ast, env), ex.evaluate(again, env)
    assert math.isclose(a, b, rel_tol=0, abs_tol=0) or (math.isnan(a) and math.isnan(b))
