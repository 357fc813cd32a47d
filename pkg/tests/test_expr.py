import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtlab.errors import DomainError, ParseError
from mtlab.expr import (
    SPHERE_VARS,
    compile_expression,
    expression_eval,
    expression_grid_eval,
    tokenize,
)
from mtlab.surface import build_icosphere, build_torus


def ev(src, **env):
    return compile_expression(src, tuple(env) or ("x", "y"))(env)


@pytest.mark.parametrize(
    "src, value",
    [
        ("1+2*3", 7.0),
        ("(1+2)*3", 9.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("2^-1", 0.5),
        ("8/4/2", 1.0),
        ("1-2-3", -4.0),
        ("--3", 3.0),
        ("+3", 3.0),
        ("cos(pi)", -1.0),
        ("exp(log(2.5))", 2.5),
        ("1.5e2 + .5", 150.5),
        ("  sin( 0 )  ", 0.0),
    ],
)
def test_examples(src, value):
    assert ev(src) == pytest.approx(value, rel=1e-15)


def test_variables():
    assert ev("x*y + x", x=2.0, y=3.0) == 8.0
    assert compile_expression("X + 2*Z", SPHERE_VARS)({"X": 1.0, "Y": 0.0, "Z": 0.5}) == 2.0


def test_numeric_config_values():
    assert compile_expression(0.25)({}) == 0.25
    assert compile_expression(3)({}) == 3.0


@pytest.mark.parametrize(
    "src, offset",
    [
        ("1+*x", 2),
        ("1 + ", 4),
        ("(1+2", 4),
        ("1+2)", 3),
        ("foo(x)", 0),
        ("x $ y", 2),
        ("sin x", 4),
        ("", 0),
        ("z", 0),
    ],
)
def test_parse_errors(src, offset):
    with pytest.raises(ParseError) as info:
        compile_expression(src)
    assert info.value.offset == offset
    assert f"at byte {offset}" in str(info.value)


def test_offsets_count_bytes():
    # the non-ASCII character occupies two bytes
    with pytest.raises(ParseError) as info:
        compile_expression("é")
    assert info.value.offset == 0
    toks = tokenize("1 + x")
    assert [t.offset for t in toks] == [0, 2, 4, 5]


def test_mesh_eval():
    m = build_torus(16)
    f = expression_eval("1 + 0.5*cos(2*pi*x)", m)
    assert np.allclose(f.values, 1 + 0.5 * np.cos(2 * np.pi * m.nodes[:, 0]))
    c = expression_eval("2", m)
    assert np.all(c.values == 2.0)
    s = build_icosphere(2)
    assert np.allclose(expression_eval("X^2+Y^2+Z^2", s).values, 1.0)


def test_domain_errors():
    m = build_torus(16)
    with pytest.raises(DomainError):
        expression_eval("log(x - 2)", m)
    with pytest.raises(DomainError):
        expression_eval("1/x", m)
    with pytest.raises(ParseError):
        expression_eval("X", m)
    with pytest.raises(DomainError):
        expression_grid_eval("log(x)", np.zeros(3), np.zeros(3))


# differential check against Python's own parser, which shares the
# precedence and associativity of ** with ^


def _leaves():
    return st.one_of(
        st.sampled_from(["x", "y", "pi"]),
        st.floats(0, 9, allow_nan=False).map(lambda v: format(v, ".6g")),
    )


def _tree(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"{t[0]} {t[1]} {t[2]}"
    )
    call = st.tuples(st.sampled_from(["sin", "cos", "exp", "log"]), children).map(lambda t: f"{t[0]}({t[1]})")
    neg = children.map(lambda s: f"-{s}")
    paren = children.map(lambda s: f"({s})")
    return st.one_of(binop, call, neg, paren)


expressions = st.recursive(_leaves(), _tree, max_leaves=8)


@given(expressions, st.floats(-2, 2), st.floats(-2, 2))
def test_matches_python(src, x, y):
    py = src.replace("^", "**")
    env = {"x": np.float64(x), "y": np.float64(y), "pi": np.pi,
           "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}
    with np.errstate(all="ignore"):
        try:
            expected = float(eval(py, {"__builtins__": {}}, env))
        except (OverflowError, ZeroDivisionError):
            return
        got = float(compile_expression(src)({"x": np.float64(x), "y": np.float64(y)}))
    if np.isnan(expected):
        assert np.isnan(got)
    else:
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)
