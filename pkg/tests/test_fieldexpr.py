import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowshoot import fieldexpr as fx
from flowshoot.flowfield import BUILTINS, builtin

# (source, (t, x1, x2), expected); every value checked by hand
FIXTURES = [
    ("0", (0, 0, 0), 0.0),
    ("x1/4", (0, 1, 0), 0.25),
    ("x1/4 + sin(pi*t/2)", (1, 0, 0), 1.0),
    ("-x1^2", (0, -1, 0), -1.0),
    ("2^3^2", (0, 0, 0), 512.0),
    ("sin(pi/2)^2 / 2", (0, 0, 0), 0.5),
    ("1 + 2 * 3", (0, 0, 0), 7.0),
    ("(1 + 2) * 3", (0, 0, 0), 9.0),
    ("10 - 4 - 3", (0, 0, 0), 3.0),
    ("100 / 10 / 5", (0, 0, 0), 2.0),
    ("2 * 3 / 4", (0, 0, 0), 1.5),
    ("-2^2", (0, 0, 0), -4.0),
    ("(-2)^2", (0, 0, 0), 4.0),
    ("2^-1", (0, 0, 0), 0.5),
    ("--3", (0, 0, 0), 3.0),
    ("+x2", (0, 0, -7), -7.0),
    ("x1 - -x2", (0, 2, 3), 5.0),
    ("t * x1 * x2", (2, 3, 4), 24.0),
    ("x1^2 + x2^2", (0, 3, 4), 25.0),
    ("sqrt(x1^2 + x2^2)", (0, 3, 4), 5.0),
    ("abs(-2.5)", (0, 0, 0), 2.5),
    ("sign(-3)", (0, 0, 0), -1.0),
    ("sign(0)", (0, 0, 0), 0.0),
    ("sign(x1)", (0, 0.1, 0), 1.0),
    ("exp(0)", (0, 0, 0), 1.0),
    ("log(1)", (0, 0, 0), 0.0),
    ("cos(0) + sin(0)", (0, 0, 0), 1.0),
    ("tan(0)", (0, 0, 0), 0.0),
    ("1.5e2 + .5", (0, 0, 0), 150.5),
    ("2E-1 * 10", (0, 0, 0), 2.0),
    ("x1/4 + x2/10", (1, 0, 1), 0.1),
    ("-x1^2 - sin(pi*t/2)^2/2", (1, 0, 1), -0.5),
    ("  x1   *2  ", (0, 4, 0), 8.0),
    ("2^2^0", (0, 0, 0), 2.0),
    ("(2^2)^3", (0, 0, 0), 64.0),
    ("8 / 2 * 4", (0, 0, 0), 16.0),
    ("1 - 2 + 3", (0, 0, 0), 2.0),
    ("abs(x1 - x2) / 2", (0, 1, 5), 2.0),
]


def test_fixture_table_is_large_enough():
    assert len(FIXTURES) >= 30


@pytest.mark.parametrize("source,point,expected", FIXTURES)
def test_fixture_values(source, point, expected):
    assert fx.evaluate(fx.parse(source), *point) == expected


@pytest.mark.parametrize(
    "source,offset",
    [
        ("1 +", 3),
        ("(1", 2),
        ("1 2", 2),
        ("y", 0),
        ("x1 + foo(2)", 5),
        ("sin(1, 2)", 5),
        ("sin", 0),
        ("x1 # 2", 3),
        ("é + 1", 0),
        ("x1 + é", 5),
        ("()", 1),
        ("", 0),
    ],
)
def test_syntax_errors_carry_offsets(source, offset):
    with pytest.raises(fx.ExprSyntaxError) as info:
        fx.parse(source)
    assert info.value.offset == offset


@pytest.mark.parametrize("source", ["log(0)", "log(-1)", "sqrt(-1)", "1/0", "x1/x2", "(-8)^(1/3)", "exp(1000)"])
def test_domain_errors_raise(source):
    with pytest.raises(fx.ExprEvalError):
        fx.evaluate(fx.parse(source), 0.0, 0.0, 0.0)


def test_tree_is_immutable():
    e = fx.parse("x1 + 1")
    with pytest.raises(Exception):
        e.op = "-"


def test_evaluation_is_repeatable():
    e = fx.parse("sin(pi*t/2)^2 * exp(x1) / (1 + x2^2)")
    vals = {fx.evaluate(e, 0.3, -0.7, 2.1) for _ in range(100)}
    assert len(vals) == 1


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_expression_form_matches_builtin(name):
    f = builtin(name)
    _, vx, vy = BUILTINS[name]
    ex, ey = fx.parse(vx), fx.parse(vy)
    worst = 0.0
    for t in np.linspace(0, 8, 50):
        for x1 in np.linspace(-1, 1, 50):
            for x2 in np.linspace(-8, 1, 50):
                v1, v2 = f.velocity(t, (x1, x2))
                worst = max(worst, abs(v1 - ex.eval(t, x1, x2)), abs(v2 - ey.eval(t, x1, x2)))
    assert worst <= 1e-12


def test_compiled_program_matches_tree():
    from flowshoot import _kernel as K

    e = fx.parse("x1/4 + sin(pi*t/2) - abs(x2)^0.5 * sign(x1) + exp(-t) * log(2 + x1)")
    ops, args = fx.compile_program(e)
    stack = np.empty(64)
    for t, x1, x2 in [(0, 0, 0), (1.3, -0.4, 2.0), (7.9, 0.99, -6.5)]:
        assert K.run_program(ops, args, t, x1, x2, stack) == pytest.approx(e.eval(t, x1, x2), abs=1e-15)


def test_compiled_program_flags_domain_errors_as_nan():
    from flowshoot import _kernel as K

    ops, args = fx.compile_program(fx.parse("log(x1)"))
    assert math.isnan(K.run_program(ops, args, 0.0, -1.0, 0.0, np.empty(8)))


# ---------------------------------------------------------------------------
# round trip

_leaf = st.one_of(
    st.sampled_from(["t", "x1", "x2", "pi"]),
    st.floats(min_value=0, max_value=1e3, allow_nan=False).map(repr),
)


def _combine(children):
    binop = st.tuples(children, st.sampled_from("+-*/^"), children).map(lambda p: f"({p[0]}){p[1]}({p[2]})")
    neg = children.map(lambda c: f"-({c})")
    call = st.tuples(st.sampled_from(sorted(fx.FUNCTIONS)), children).map(lambda p: f"{p[0]}({p[1]})")
    return st.one_of(binop, neg, call)


expressions = st.recursive(_leaf, _combine, max_leaves=12)
points = st.tuples(*(st.floats(-3, 3, allow_nan=False),) * 3)


def _safe_eval(e, p):
    try:
        return ("ok", e.eval(*p))
    except fx.ExprEvalError:
        return ("err", None)


@settings(max_examples=300, deadline=None)
@given(expressions, st.lists(points, min_size=1, max_size=10))
def test_print_parse_round_trip(source, pts):
    e = fx.parse(source)
    back = fx.parse(fx.to_source(e))
    assert back == e
    for p in pts:
        a, b = _safe_eval(e, p), _safe_eval(back, p)
        assert a == b or (a[0] == "ok" and math.isnan(a[1]) and math.isnan(b[1]))


def test_round_trip_on_thousand_points():
    rng = np.random.default_rng(7)
    src = "x1/4 + x2/10 - sin(pi*t/2)^2/2 + sqrt(abs(x1*x2)) - 2^-x1"
    e = fx.parse(src)
    back = fx.parse(fx.to_source(e))
    for t, x1, x2 in rng.uniform(-5, 5, size=(1000, 3)):
        assert back.eval(t, x1, x2) == e.eval(t, x1, x2)
