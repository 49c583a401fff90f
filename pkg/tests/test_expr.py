import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastlyap.expr import (GRAMMAR_VERSION, ExpressionError, compile_expression, gauge_function, load_description,
                           scalar_function, state_names, vector_field)


def ev(src, **env):
    return compile_expression(src, list(env))(env)


def test_precedence_and_associativity():
    assert ev("-x^2", x=3.0) == -9.0
    assert ev("2^3^2") == 512.0
    assert ev("1 + 2*3 - 4/2") == 5.0
    assert ev("(1 + 2)*3") == 9.0
    assert ev("2*pi") == pytest.approx(2 * math.pi)
    assert ev("ln(e)") == pytest.approx(1.0)
    assert ev("abs(-2) + atan(1)*4") == pytest.approx(2 + math.pi)


@pytest.mark.parametrize("src", ["y + 1", "foo(1)", "x.real", "__import__('os')", "x if x else 1", "[x]",
                                 "sin(x, x)", "", "x +", "True", "'a'", "sin(x=1)", "lambda: 1"])
def test_rejected(src):
    with pytest.raises(ExpressionError):
        compile_expression(src, ["x"])


def test_state_names():
    assert state_names(1) == {"x1": 0, "x_1": 0, "x": 0}
    assert "x" not in state_names(2)


def test_vector_field_broadcasts_over_times():
    f = vector_field(["-x1 + sin(tau)", "x_1*x2 + t"], 2)
    x = np.array([1.0, 2.0])
    out = f(x, np.array([0.0, 1.0, 2.0]), 0.5)
    assert out.shape == (3, 2)
    assert np.allclose(out[:, 0], -1 + math.sin(0.5))
    assert np.allclose(out[:, 1], [2.0, 3.0, 4.0])
    assert f(x, 0.0, 0.0).shape == (2,)
    with pytest.raises(ExpressionError):
        vector_field(["x1"], 2)


def test_scalar_and_gauge_functions():
    V = scalar_function("x1^2/2 + x2^2", 2)
    assert V(np.array([2.0, 1.0]), 0.0) == 3.0
    g = gauge_function("33*atan(2*s)")
    s = np.array([0.0, 1.0, 10.0])
    assert np.allclose(g(s), 33 * np.arctan(2 * s))
    assert np.allclose(gauge_function("1")(s), 1.0)


def test_load_description(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(json.dumps({"dim": 1, "f": ["-x"]}))
    assert load_description(p)["dim"] == 1
    p.write_text("[1, 2]")
    with pytest.raises(ExpressionError):
        load_description(p)
    assert GRAMMAR_VERSION == 1


OPS = ["+", "-", "*"]
FUNCS = {"sin": math.sin, "cos": math.cos, "tanh": math.tanh, "atan": math.atan}


@st.composite
def expressions(draw, depth=0):
    """Random expression with a matching Python evaluator over ``x``."""
    if depth > 3 or draw(st.booleans()):
        if draw(st.booleans()):
            c = draw(st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3)))
            return f"({c!r})", (lambda x, c=c: c)
        return "x", (lambda x: x)
    kind = draw(st.sampled_from(["op", "fn", "neg"]))
    a_src, a_fn = draw(expressions(depth=depth + 1))
    if kind == "fn":
        name = draw(st.sampled_from(sorted(FUNCS)))
        return f"{name}({a_src})", (lambda x, f=FUNCS[name], a=a_fn: f(a(x)))
    if kind == "neg":
        return f"-({a_src})", (lambda x, a=a_fn: -a(x))
    b_src, b_fn = draw(expressions(depth=depth + 1))
    op = draw(st.sampled_from(OPS))
    pyop = {"+": lambda u, v: u + v, "-": lambda u, v: u - v, "*": lambda u, v: u * v}[op]
    return f"({a_src} {op} {b_src})", (lambda x, a=a_fn, b=b_fn, o=pyop: o(a(x), b(x)))


@settings(max_examples=200, deadline=None)
@given(expressions(), st.floats(-3, 3, allow_nan=False))
def test_matches_direct_evaluation(expr, x):
    src, ref = expr
    got = float(compile_expression(src, ["x"])({"x": x}))
    want = ref(x)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
