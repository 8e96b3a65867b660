import random

import pytest
from hypothesis import given, settings, strategies as st

from tanlift import expr as ex
from tanlift.dsl import (
    DSLError,
    ParseError,
    WorkspaceError,
    parse_expression,
    parse_workspace,
    serialize_workspace,
)
from helpers import CORPUS, expressions

SPHERE = """
# unit sphere
manifold sphere {
  dim 2;
  coords theta, phi;
  metric { g[0][0] = 1; g[1][1] = sin(theta)^2; }
  domain { theta in (0.3, 2.8); phi in (0.1, 6.1); }
}
vectorfield rot on sphere { v[1] = 1; }
"""


def test_sphere_workspace():
    ws = parse_workspace(SPHERE, "s")
    assert list(ws.manifolds) == ["sphere"]
    m = ws.manifolds["sphere"]
    assert m.coords == ("theta", "phi") and m.dim == 2
    assert m.metric is not None and m.connection is None
    assert m.domain["theta"] == (0.3, 2.8)
    c = m.connection_object()
    assert ex.equivalent(c.components[0, 1, 1], -ex.sin(ex.var("theta")) * ex.cos(ex.var("theta")), m.domain)


def test_expression_examples():
    e = parse_expression("-sin(theta)*cos(theta)")
    assert ex.free_vars(e) == {"theta"}
    assert ex.evaluate(e, {"theta": 0.25}) == pytest.approx(-0.5 * 0.479425538604203)
    assert ex.evaluate(parse_expression("2^3^2"), {}) == 512.0
    assert ex.evaluate(parse_expression("-2^2"), {}) == -4.0
    assert ex.evaluate(parse_expression("2^-1"), {}) == 0.5
    assert ex.evaluate(parse_expression("8/2/2"), {}) == 2.0
    assert ex.evaluate(parse_expression("1 - 2 - 3"), {}) == -4.0
    assert ex.evaluate(parse_expression("1.5e1 + .5"), {}) == 15.5


def test_syntax_error_position():
    with pytest.raises(ParseError) as info:
        parse_expression("sin(")
    assert info.value.pos == 4
    for bad in ("", "1 +", "(x", "x y", "foo(x)", "x $ 2", "sin x", "3 ^"):
        with pytest.raises(ParseError):
            parse_expression(bad)


def test_nesting_limit_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_expression("(" * 5000 + "x" + ")" * 5000)
    with pytest.raises(ParseError):
        parse_expression("-" * 5000 + "x")


def _err(text):
    with pytest.raises(WorkspaceError) as info:
        parse_workspace(text)
    return info.value


def test_metric_and_connection_conflict():
    text = SPHERE.replace("domain {", "connection { Gamma[0][1][1] = 1; }\n  domain {", 1)
    assert _err(text).kind == "conflict"


def test_unknown_coordinate_in_field():
    assert _err(SPHERE + "vectorfield bad on sphere { v[0] = z; }").kind == "unknown-coordinate"


def test_other_validation_errors():
    assert _err(SPHERE + "vectorfield rot on sphere { v[0] = 1; }").kind == "duplicate"
    assert _err(SPHERE + "vectorfield f on torus { v[0] = 1; }").kind == "unknown-manifold"
    assert _err(SPHERE.replace("dim 2", "dim 3")).kind == "dimension"
    assert _err(SPHERE.replace("phi in (0.1, 6.1);", "")).kind == "missing-domain"
    assert _err(SPHERE.replace("(0.3, 2.8)", "(2.8, 0.3)")).kind == "domain"
    assert _err(SPHERE.replace("g[1][1] = sin(theta)^2;", "g[1][1] = sin(theta)^2; g[0][1] = 1; g[1][0] = 2;")).kind == "asymmetric"
    with pytest.raises(DSLError):
        parse_workspace(SPHERE.replace("v[1]", "v[5]"))


def test_error_carries_line_and_column():
    err = _err(SPHERE + "vectorfield bad on sphere { v[0] = z; }")
    assert err.line == 10 and "line 10" in str(err)


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.lg")), ids=lambda p: p.stem)
def test_serialize_round_trip(path):
    ws = parse_workspace(path.read_text(), path.stem)
    again = parse_workspace(serialize_workspace(ws), path.stem)
    assert serialize_workspace(again) == serialize_workspace(ws)
    for name, m in ws.manifolds.items():
        m2 = again.manifolds[name]
        assert m2.coords == m.coords and dict(m2.domain) == dict(m.domain)
        a = m.metric if m.metric is not None else m.connection
        b = m2.metric if m2.metric is not None else m2.connection
        assert ex.residual(list(a.ravel()), list(b.ravel()), m.domain).value == 0.0
        for f in m.fields:
            assert ex.residual(list(m.fields[f]), list(m2.fields[f]), m.domain).value == 0.0


@settings(max_examples=200, deadline=None)
@given(expressions(4))
def test_rendered_expressions_reparse(e):
    back = parse_expression(ex.to_string(e))
    assert ex.equivalent(back, e, {"x": (-1, 1), "y": (-1, 1)}, k=5, tol=1e-12)


ALPHABET = list("xy0123456789.+-*/^(),; eE") + ["sin", "cos", "log", "sqrt", "exp", "tan", "theta"]


def test_fuzz_expression_parser():
    rng = random.Random(2024)
    accepted = 0
    for _ in range(10_000):
        s = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, 25)))
        try:
            e = parse_expression(s)
        except DSLError as err:
            assert 0 <= err.pos <= len(s)
            continue
        assert isinstance(e, ex.Expr)
        accepted += 1
    assert accepted > 100


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_fuzz_bytes_never_crash(data):
    text = data.decode("utf-8", errors="replace")
    for fn in (parse_expression, parse_workspace):
        try:
            fn(text)
        except DSLError:
            pass
