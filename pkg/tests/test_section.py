import numpy as np
import pytest

from tanlift import expr as ex
from tanlift.base import (
    build_array,
    covariant_derivative,
    curvature,
    field_curvature,
    is_zero_array,
    lie_derivative_connection,
    lie_derivative_tensor,
    tensor_residual,
)
from tanlift.section import (
    adapted_frame,
    curvature_decomposition,
    frame_curvature,
    gauss_decomposition,
    induced_connection,
    is_curvature_tangent,
    is_totally_geodesic,
    second_fundamental,
    second_fundamental_from_frame,
    vertical_curvature_terms,
)
from helpers import corpus_pairs, setup

PAIRS = list(corpus_pairs())
ID = lambda p: "/".join(p)  # noqa: E731


def pair(stem, fname, mname=None):
    decl, M, c = setup(stem, mname)
    return M, c, decl.field(fname, M)


def second_covariant_derivative(v, c):
    """nabla_j nabla_i v^h as [h, j, i], built from first principles."""
    D2 = covariant_derivative(covariant_derivative(v.as_tensor(), c), c).components  # [j, i, h]
    return D2.transpose(2, 0, 1)


def test_trivial_frame():
    M, c, v = pair("flat", "zero")
    fr = adapted_frame(v)
    n = M.dim
    for A in range(2 * n):
        for j in range(n):
            assert fr.B[A, j].is_value(1.0 if A == j else 0.0)
            assert fr.C[A, j].is_value(1.0 if A == n + j else 0.0)


def test_quadratic_field_frame():
    M, c, v = pair("flat", "quad")
    B = adapted_frame(v).B
    assert ex.equivalent(B[2, 0], 2 * ex.var("x"), M.domain)
    assert B[2, 1].is_zero and B[3, 0].is_zero and B[3, 1].is_zero


@pytest.mark.parametrize("p", PAIRS, ids=ID)
def test_frame_duality_is_exact(p):
    M, c, v = pair(p[0], p[2], p[1])
    assert adapted_frame(v).duality_exact()


def test_induced_connection_examples():
    M, c, v = pair("flat", "poly")
    assert is_zero_array(induced_connection(v, c), M.domain)
    M, c, v = pair("sphere", "rot")
    assert tensor_residual(induced_connection(v, c), c, M.domain).value <= 1e-12
    M, c, v = pair("polar", "poly")
    assert tensor_residual(induced_connection(v, c), c, M.domain).value <= 1e-12


def test_second_fundamental_examples():
    M, c, v = pair("flat", "lin")
    assert all(e.is_zero for e in second_fundamental(v, c).components.ravel())
    M, c, v = pair("flat", "quad")
    H = second_fundamental(v, c).components
    assert H[0, 0, 0].is_value(2.0)
    assert sum(not e.is_zero for e in H.ravel()) == 1
    M, c, v = pair("sphere", "rot")
    H = second_fundamental(v, c)
    assert not is_zero_array(H, M.domain)
    assert is_zero_array(lie_derivative_connection(v, c), M.domain)


@pytest.mark.parametrize("p", PAIRS, ids=ID)
def test_second_fundamental_is_hessian_of_field(p):
    # oracle: for a torsion-free connection the normal part of the section
    # derivative is the second covariant derivative of the field
    M, c, v = pair(p[0], p[2], p[1])
    H_frame, leftover = second_fundamental_from_frame(v, c)
    oracle = second_covariant_derivative(v, c)
    assert tensor_residual(H_frame, oracle, M.domain).value <= 1e-9
    assert is_zero_array(leftover, M.domain)
    assert tensor_residual(second_fundamental(v, c), oracle, M.domain).value <= 1e-9


def test_plus_sign_curvature_variant_is_refuted():
    # adding v^t R instead of subtracting it disagrees with the lifted geometry
    M, c, v = pair("sphere", "rot")
    R = curvature(c)
    H_frame, _ = second_fundamental_from_frame(v, c)
    L = lie_derivative_connection(v, c).components
    VR = field_curvature(v, R).components
    assert tensor_residual(H_frame, L - VR, M.domain).value <= 1e-12
    assert tensor_residual(H_frame, L + VR, M.domain).value > 0.1


def test_gauss_decomposition_examples():
    M, c, v = pair("flat", "lin")
    gd = gauss_decomposition(v, c)
    assert is_zero_array(gd.tangential.components, M.domain) and is_zero_array(gd.normal, M.domain)
    M, c, v = pair("polar", "rot")
    gd = gauss_decomposition(v, c)
    assert tensor_residual(gd.tangential, c, M.domain).value <= 1e-12
    assert is_zero_array(gd.normal, M.domain)
    M, c, v = pair("sphere", "rot")
    gd = gauss_decomposition(v, c)
    assert tensor_residual(gd.tangential, c, M.domain).value <= 1e-12
    assert tensor_residual(gd.normal, -field_curvature(v, curvature(c)).components, M.domain).value <= 1e-12
    assert not is_zero_array(gd.normal, M.domain)


def test_curvature_decomposition_flat():
    M, c, v = pair("flat", "poly")
    cd = curvature_decomposition(v, c)
    assert is_zero_array(cd.tangential, M.domain) and is_zero_array(cd.vertical, M.domain)


def test_curvature_decomposition_sphere_killing():
    M, c, v = pair("sphere", "rot")
    cd = curvature_decomposition(v, c)
    R = curvature(c)
    LR, A = vertical_curvature_terms(v, c)
    assert tensor_residual(cd.tangential, R, M.domain).value <= 1e-12
    assert is_zero_array(LR, M.domain)
    assert tensor_residual(cd.vertical, -A, M.domain).value <= 1e-9


def test_curvature_decomposition_nonsymmetric_field():
    M, c, v = pair("sphere", "ftheta")
    cd = curvature_decomposition(v, c)  # the check compares both computations
    assert not is_zero_array(cd.vertical, M.domain)


@pytest.mark.parametrize("p", PAIRS, ids=ID)
def test_vertical_curvature_is_derivative_of_H(p):
    # oracle: vertical part = nabla_k H^h_{ji} - nabla_j H^h_{ki} with H the Hessian of v
    M, c, v = pair(p[0], p[2], p[1])
    from tanlift.base import UP, DOWN, Tensor
    H = Tensor(M, (UP, DOWN, DOWN), second_covariant_derivative(v, c))
    D = covariant_derivative(H, c).components  # [k, h, j, i]
    n = M.dim
    oracle = build_array((n,) * 4, lambda h, k, j, i: D[k, h, j, i] - D[j, h, k, i])
    tan, ver = frame_curvature(v, c)
    assert tensor_residual(ver, oracle, M.domain).value <= 1e-8
    assert tensor_residual(tan, curvature(c), M.domain).value <= 1e-8


def test_geodesic_verdicts():
    assert is_totally_geodesic(*reversed(pair("flat", "lin")[1:])).as_tuple() == (True, True, True)
    M, c, v = pair("flat", "quad")
    assert is_totally_geodesic(v, c).as_tuple() == (False, False, True)
    M, c, v = pair("sphere", "rot")
    vd = is_totally_geodesic(v, c)
    assert vd.as_tuple() == (False, True, False) and vd.holds and vd.h_residual > 1e-3
    M, c, v = pair("polar", "rot")
    assert is_totally_geodesic(v, c).as_tuple() == (True, True, True)


def test_tangency_verdicts():
    for f in ("zero", "rot", "poly"):
        M, c, v = pair("flat", f)
        assert is_curvature_tangent(v, c).as_tuple() == (True, True, True)
    M, c, v = pair("sphere", "rot")
    vd = is_curvature_tangent(v, c)
    assert vd.lie_zero and vd.holds
    M, c, v = pair("sphere", "poly")
    vd = is_curvature_tangent(v, c)
    assert vd.as_tuple() == (False, False, False) and vd.holds


def test_conformal_field_breaks_necessity():
    # sin(theta) d_theta on the unit sphere: the curvature stays tangent, yet
    # neither stated condition holds (the two vertical terms cancel)
    M, c, v = pair("conformal", "conformal")
    vd = is_curvature_tangent(v, c)
    assert vd.vertical_zero
    assert not vd.lie_zero and not vd.derivative_term_zero
    assert not vd.holds
    LR, A = vertical_curvature_terms(v, c)
    assert tensor_residual(LR, A, M.domain).value <= 1e-9
