"""Expression parser: precedence, canonical printing, reference evaluation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sif_lab.expr import (EvalDomainError, ExprSyntaxError, FieldExpr,
                          UnknownIdentifier, evaluate, parse)
from sif_lab.modes import CornerFrame

FRAME = CornerFrame(0.0, 1.5 * math.pi)


# -- precedence and associativity ---------------------------------------------

@pytest.mark.parametrize("text,want", [
    ("2+3*4", 14.0),
    ("(2+3)*4", 20.0),
    ("1-2-3", -4.0),
    ("8/4/2", 1.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("2^-3", 0.125),
    ("2*3^2", 18.0),
    ("2*-3", -6.0),
    ("--2", 2.0),
    ("1e3", 1000.0),
    ("2.5e-2", 0.025),
    ("0.5^2", 0.25),
    ("abs(0-7)", 7.0),
    ("atan2(1, 1)", math.pi / 4),
])
def test_precedence_table(text, want):
    got = evaluate(parse(text), 0.0, 0.0)
    assert got == pytest.approx(want, rel=1e-15)


def test_variables_and_constants():
    e = parse("x + 2*y + r*cos(theta) + pi")
    assert e.variables() == {"x", "y", "r", "theta"}
    v = evaluate(e, 3.0, 4.0)
    # r*cos(theta) is just x again
    assert v == pytest.approx(3.0 + 8.0 + 3.0 + math.pi)
    w = evaluate(parse("omega2 - omega1"), 1.0, 1.0, frame=FRAME)
    assert w == pytest.approx(1.5 * math.pi)


def test_theta_uses_frame_branch():
    base = evaluate(parse("theta"), -1.0, -1.0)
    assert base == pytest.approx(-0.75 * math.pi)
    branched = evaluate(parse("theta"), -1.0, -1.0, frame=FRAME)
    assert branched == pytest.approx(1.25 * math.pi)


def test_vectorized_evaluation_shape():
    x = np.linspace(0.1, 1.0, 7)
    y = np.linspace(0.2, 0.9, 7)
    out = evaluate(parse("sin(x*y) + r^2"), x, y)
    assert out.shape == (7,)
    assert np.allclose(out, np.sin(x * y) + x * x + y * y)


# -- independent reference evaluator (CPython grammar) -------------------------

REFERENCE_EXPRESSIONS = [
    "2*x^2 - 3*y/(1 + r) + sin(theta)*cos(x*y)",
    "atan2(y, x) + sqrt(r) - exp(0 - x)",
    "-x^2 + 2^-x + x*-y",
    "1.5e-1*x + 2E2*y - .5",
    "log(1 + x^2) / (2 + cos(y))",
    "abs(x - y)^3 + tan(x/4)",
]


def reference_eval(text, x, y):
    """Evaluate through Python's own parser: ^ maps to ** with the same
    associativity and unary-minus binding as the config grammar."""
    env = {
        "x": x, "y": y, "r": np.hypot(x, y), "theta": np.arctan2(y, x),
        "pi": math.pi, "sin": np.sin, "cos": np.cos, "tan": np.tan,
        "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
        "atan2": np.arctan2, "abs": np.abs,
    }
    return eval(compile(text.replace("^", "**"), "<ref>", "eval"),
                {"__builtins__": {}}, env)


@pytest.mark.parametrize("text", REFERENCE_EXPRESSIONS)
def test_against_python_grammar(text):
    rng = np.random.default_rng(11)
    x = rng.uniform(0.1, 1.5, 40)
    y = rng.uniform(0.1, 1.5, 40)
    ours = evaluate(parse(text), x, y)
    ref = reference_eval(text, x, y)
    assert np.allclose(ours, ref, rtol=1e-14, atol=1e-14)


# -- canonical printing -------------------------------------------------------

_leaf = st.one_of(
    st.floats(0.1, 9.0).map(lambda v: FieldExpr("num", value=round(v, 3))),
    st.sampled_from(["x", "y", "r"]).map(lambda n: FieldExpr("var", value=n)),
)


def _trees(children):
    binop = st.sampled_from(["+", "-", "*", "/"])
    return st.one_of(
        st.tuples(binop, children, children).map(
            lambda t: FieldExpr(t[0], (t[1], t[2]))),
        children.map(lambda c: FieldExpr("neg", (c,))),
        children.map(lambda c: FieldExpr("call", (c,), "sin")),
    )


expr_trees = st.recursive(_leaf, _trees, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(tree=expr_trees)
def test_print_parse_roundtrip(tree):
    assert parse(str(tree)) == tree


@settings(max_examples=60, deadline=None)
@given(tree=expr_trees)
def test_printed_form_is_a_fixed_point(tree):
    text = str(tree)
    assert str(parse(text)) == text


# -- errors -------------------------------------------------------------------

def test_syntax_error_positions():
    with pytest.raises(ExprSyntaxError) as info:
        parse("1 +\n* 2")
    assert info.value.line == 2
    assert info.value.col == 1

    with pytest.raises(ExprSyntaxError) as info:
        parse("(1 + 2")
    assert "')'" in info.value.expected

    with pytest.raises(ExprSyntaxError):
        parse("")
    with pytest.raises(ExprSyntaxError):
        parse("1 2")
    with pytest.raises(ExprSyntaxError):
        parse("sin(1, 2)")  # wrong arity


def test_unknown_identifiers():
    with pytest.raises(UnknownIdentifier):
        parse("z + 1")
    with pytest.raises(UnknownIdentifier):
        parse("foo(1)")


def test_domain_errors():
    with pytest.raises(EvalDomainError):
        evaluate(parse("1/x"), 0.0, 1.0)
    with pytest.raises(EvalDomainError):
        evaluate(parse("sqrt(x)"), -1.0, 0.0)
    with pytest.raises(EvalDomainError):
        evaluate(parse("log(r)"), 0.0, 0.0)
    with pytest.raises(EvalDomainError):
        evaluate(parse("x^0.5"), -1.0, 0.0)
    with pytest.raises(EvalDomainError):
        evaluate(parse("omega1"), 1.0, 1.0)  # needs a frame
