import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tanlift import expr as ex
from tanlift import _kernels
from tanlift.dsl import parse_expression as P
from helpers import BOX, X, Y, central_difference, expressions, random_expr

th = ex.var("theta")


def test_differentiate_chain_rule():
    d = ex.differentiate(ex.sin(th) ** 2, "theta")
    assert ex.equivalent(d, 2 * ex.sin(th) * ex.cos(th), {"theta": (-3, 3)})


def test_derivative_of_constant_is_zero():
    assert ex.differentiate(ex.const(7), "x").is_zero
    assert ex.differentiate(Y * Y, "x").is_zero


def test_evaluate_examples():
    assert ex.evaluate(ex.sin(th) ** 2, {"theta": math.pi / 2}) == pytest.approx(1.0)
    assert ex.evaluate(X * Y + Y ** 2, {"x": 2, "y": 3}) == 15.0
    with pytest.raises(ex.DomainError):
        ex.evaluate(1 / X, {"x": 0.0})


def test_evaluate_domain_errors():
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.log(X), {"x": -1.0})
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.sqrt(X), {"x": -1.0})
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.power(X, Y), {"x": -1.0, "y": 2.0})
    # integer constant exponents accept negative bases
    assert ex.evaluate(X ** 3, {"x": -2.0}) == -8.0
    with pytest.raises(ex.MissingVariableError):
        ex.evaluate(X + Y, {"x": 1.0})


def test_equivalent_examples():
    assert ex.equivalent(ex.sin(th) ** 2 + ex.cos(th) ** 2, 1, {"theta": (-10, 10)})
    assert not ex.equivalent(X, X + 1e-3, BOX, tol=1e-9)
    sq = ex.node("pow", ex.node("add", X, Y), ex.const(2))
    box5 = {"x": (-5, 5), "y": (-5, 5)}
    assert ex.equivalent(sq, X ** 2 + 2 * X * Y + Y ** 2, box5, k=20)


def test_simplify_examples():
    e = ex.node("add", ex.node("mul", ex.const(0), ex.sin(th)), ex.node("mul", ex.const(1), ex.var("phi")))
    assert ex.simplify(e) is ex.var("phi")
    assert ex.simplify(ex.node("add", ex.const(2), ex.const(3))) is ex.const(5)
    assert ex.simplify(ex.node("pow", X, ex.const(1))) is X


def test_hash_consing_and_immutability():
    assert ex.node("add", X, Y) is ex.node("add", X, Y)
    with pytest.raises(AttributeError):
        X.name = "z"


def test_like_terms_cancel_structurally():
    a, b = X * Y, ex.sin(X)
    assert ((b - a) + (a - b)).is_zero
    assert (2 * a + 3 * a - 5 * a).is_zero


def test_to_string_reparses():
    e = -(ex.sin(th) * ex.cos(th)) + ex.const(-2) * X ** Y
    assert ex.equivalent(P(ex.to_string(e)), e, {"theta": (0, 1), "x": (0.5, 2), "y": (-1, 1)})


def test_unsampleable_reports():
    with pytest.raises(ex.UnsampleableError):
        ex.residual([ex.log(-(X ** 2) - 1)], [ex.ZERO], BOX)


def test_residual_witness_and_determinism():
    r1 = ex.residual([X], [X + 1], BOX, 20, 3)
    r2 = ex.residual([X], [X + 1], BOX, 20, 3)
    assert r1 == r2 and r1.witness is not None and r1.value > 0.3


@settings(max_examples=100, deadline=None)
@given(expressions(), st.integers(0, 2**31))
def test_derivative_matches_central_difference(e, seed):
    for p in ex.sample_points(BOX, 3, seed):
        for v in ("x", "y"):
            d = ex.evaluate(ex.differentiate(e, v), p)
            fd = central_difference(e, v, p, 1e-5)
            assert abs(d - fd) <= 1e-5 * (1 + abs(d)) + 1e-6


@settings(max_examples=60, deadline=None)
@given(expressions(3), expressions(3), st.floats(-3, 3), st.floats(-3, 3))
def test_derivative_is_linear(f, g, a, b):
    lhs = ex.differentiate(a * f + b * g, "x")
    rhs = a * ex.differentiate(f, "x") + b * ex.differentiate(g, "x")
    assert ex.residual([lhs], [rhs], BOX, 10, 0).value <= 1e-9


def test_simplify_preserves_values_on_random_trees():
    rng = random.Random(1234)
    for _ in range(1000):
        e = random_expr(rng, 5, raw=True)
        s = ex.simplify(e)
        for p in ex.sample_points(BOX, 10, rng.randrange(2**31)):
            a, b = ex.evaluate(e, p), ex.evaluate(s, p)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


@settings(max_examples=50, deadline=None)
@given(expressions(), st.integers(0, 1000))
def test_equivalent_is_deterministic(e, seed):
    f = e + 1e-6 * ex.sin(X)
    assert ex.residual([e], [f], BOX, 20, seed) == ex.residual([e], [f], BOX, 20, seed)


@settings(max_examples=50, deadline=None)
@given(expressions(), st.integers(0, 1000))
def test_kernel_backends_agree_with_scalar_evaluation(e, seed):
    names = ["x", "y"]
    prog = _kernels.compile_program([e, ex.differentiate(e, "x")], names)
    pts = ex.sample_points(BOX, 8, seed)
    xs = np.array([[p[n] for p in pts] for n in names])
    a = prog.run(xs, backend="numpy")
    b = prog.run(xs, backend="numba")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    for j, p in enumerate(pts):
        assert a[0, j] == pytest.approx(ex.evaluate(e, p), rel=1e-12, abs=1e-12)


def test_kernels_mark_domain_errors_as_nan():
    prog = _kernels.compile_program([ex.log(X), 1 / X, ex.sqrt(X)], ["x"])
    for backend in ("numpy", "numba"):
        v = prog.run(np.array([[-1.0, 0.0, 4.0]]), backend=backend)
        assert np.isnan(v[0, 0]) and np.isnan(v[1, 1]) and np.isnan(v[2, 0])
        assert v[2, 2] == 2.0


def test_sample_points_reproducible():
    dom = {"x": (0.0, 1.0)}
    assert ex.sample_points(dom, 1, 7) == ex.sample_points(dom, 1, 7)
    assert ex.sample_points(dom, 1, 7)[0] != ex.sample_points(dom, 1, 8)[0]
    assert all(0.0 < p["x"] < 1.0 for p in ex.sample_points(dom, 500, 1))


def test_backend_flag(monkeypatch):
    monkeypatch.setenv("TANLIFT_BACKEND", "numpy")
    assert _kernels.default_backend() == "numpy"
    monkeypatch.delenv("TANLIFT_BACKEND")
    assert _kernels.default_backend() == "numba"
    with pytest.raises(ValueError):
        _kernels.compile_program([X], ["x"]).run(np.zeros((1, 2)), backend="cuda")
