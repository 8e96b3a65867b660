"""Geometry of the cross-section y = v(x) of T(M) determined by a vector field.

Everything living along the section is a function of the base coordinates
only: bundle expressions are restricted by substituting the fibre
coordinates with the components of the field.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import faults
from .base import (
    CheckOptions,
    Connection,
    DEFAULT_CHECK,
    InconsistencyError,
    Tensor,
    UP,
    DOWN,
    VectorField,
    antisymmetrized_derivative,
    build_array,
    curvature,
    field_curvature,
    is_zero_array,
    lie_derivative_connection,
    lie_derivative_tensor,
    tensor_residual,
    zeros,
    _require_symmetric,
)
from .bundle import (
    BundleConnection,
    BundleCoordinates,
    bundle_covariant_derivative,
    bundle_curvature,
    horizontal_lift_connection,
)
from .expr import ONE, ZERO, add_all, differentiate


def restrict(arr: np.ndarray, v: VectorField) -> np.ndarray:
    """Substitute fibre coordinates y^h := v^h(x) in every component."""
    coords = BundleCoordinates.of(v.manifold)
    mapping = dict(zip(coords.fibre, v.components))
    memo: dict = {}
    arr = np.asarray(arr, dtype=object)
    return build_array(arr.shape, lambda *idx: ex.substitute(arr[idx], mapping, memo))


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    """Columns B[:, j], C[:, j] (2n rows) and inverse rows B_inv[h, :], C_inv[h, :]."""

    field: VectorField
    B: np.ndarray
    C: np.ndarray
    B_inv: np.ndarray
    C_inv: np.ndarray

    def duality(self) -> dict[str, np.ndarray]:
        """The four products B_A^h B_j^A, C_A^h C_j^A, B_A^h C_j^A, C_A^h B_j^A."""
        N, n = self.B.shape

        def prod(rows, cols):
            return build_array((n, n), lambda h, j: add_all(rows[h, A] * cols[A, j] for A in range(N)))

        return {
            "B_inv.B": prod(self.B_inv, self.B),
            "C_inv.C": prod(self.C_inv, self.C),
            "B_inv.C": prod(self.B_inv, self.C),
            "C_inv.B": prod(self.C_inv, self.B),
        }

    def duality_exact(self) -> bool:
        n = self.B.shape[1]
        for name, P in self.duality().items():
            identity = name in ("B_inv.B", "C_inv.C")
            for h, j in itertools.product(range(n), repeat=2):
                e = ex.simplify(P[h, j])
                if not e.is_value(1.0 if identity and h == j else 0.0):
                    return False
        return True


def adapted_frame(v: VectorField) -> AdaptedFrame:
    """B_(j) = (delta^h_j, d_j v^h), C_(j) = (0, delta^h_j) and their dual rows
    B_A^h = (delta^h_j, 0), C_A^h = (-d_j v^h, delta^h_j)."""
    M = v.manifold
    n, x = M.dim, M.coords
    dv = build_array((n, n), lambda h, j: differentiate(v.components[h], x[j]))
    s_tf = faults.sign("frame.tangent_fibre")
    s_if = faults.sign("frame.inverse_fibre")
    delta = lambda a, b: ONE if a == b else ZERO  # noqa: E731
    B = build_array((2 * n, n), lambda A, j: delta(A, j) if A < n else s_tf * dv[A - n, j])
    C = build_array((2 * n, n), lambda A, j: ZERO if A < n else delta(A - n, j))
    B_inv = build_array((n, 2 * n), lambda h, A: delta(h, A) if A < n else ZERO)
    C_inv = build_array((n, 2 * n), lambda h, A: -s_if * dv[h, A] if A < n else delta(h, A - n))
    return AdaptedFrame(v, B, C, B_inv, C_inv)


def frame_derivative(v: VectorField, c: Connection, frame: AdaptedFrame | None = None,
                     gc: BundleConnection | None = None) -> np.ndarray:
    """d_j B_i^A + Gamma-bar^A_{MN} B_j^M B_i^N along the section, as [A, j, i]."""
    frame = frame or adapted_frame(v)
    gc = gc or horizontal_lift_connection(c)
    n, x = v.manifold.dim, v.manifold.coords
    N = 2 * n
    G = restrict(gc.components, v)
    B = frame.B
    return build_array((N, n, n), lambda A, j, i: add_all([
        differentiate(B[A, i], x[j]),
        *(G[A, M, Nn] * B[M, j] * B[Nn, i] for M in range(N) for Nn in range(N)),
    ]))


def induced_connection(v: VectorField, c: Connection, check: bool = True,
                       opts: CheckOptions = DEFAULT_CHECK, frame: AdaptedFrame | None = None,
                       gc: BundleConnection | None = None) -> Connection:
    """'Gamma^h_{ji} = (d_j B_i^A + Gamma-bar^A_{MN} B_j^M B_i^N) B_A^h.

    With ``check`` the result is compared with ``c``; they must agree.
    """
    frame = frame or adapted_frame(v)
    D = frame_derivative(v, c, frame, gc)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    comps = build_array((n, n, n), lambda h, j, i: add_all(D[A, j, i] * frame.B_inv[h, A] for A in range(N)))
    induced = Connection(v.manifold, comps, symmetric=c.symmetric)
    if check:
        res = tensor_residual(induced.components, c.components, v.manifold.domain, opts)
        if res.value > opts.tol:
            raise InconsistencyError("induced connection differs from base connection", res)
    return induced


def gauss_residual_vector(v: VectorField, c: Connection, frame: AdaptedFrame | None = None,
                          gc: BundleConnection | None = None) -> np.ndarray:
    """d_j B_i^A + Gamma-bar^A_{MN} B_j^M B_i^N - Gamma^h_{ji} B_h^A, as [A, j, i].

    This is a combination of the fibre vectors C_(k) alone."""
    frame = frame or adapted_frame(v)
    D = frame_derivative(v, c, frame, gc)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    G = c.components
    return build_array((N, n, n), lambda A, j, i: D[A, j, i] - add_all(G[h, j, i] * frame.B[A, h] for h in range(n)))


def second_fundamental_from_frame(v: VectorField, c: Connection, frame: AdaptedFrame | None = None,
                                  gc: BundleConnection | None = None) -> tuple[Tensor, np.ndarray]:
    """Project the frame residual onto the inverse rows.

    Returns (H via C_A^k, tangential leftover via B_A^h); the leftover must vanish.
    """
    frame = frame or adapted_frame(v)
    E = gauss_residual_vector(v, c, frame, gc)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    H = build_array((n, n, n), lambda k, j, i: add_all(frame.C_inv[k, A] * E[A, j, i] for A in range(N)))
    T = build_array((n, n, n), lambda h, j, i: add_all(frame.B_inv[h, A] * E[A, j, i] for A in range(N)))
    return Tensor(v.manifold, (UP, DOWN, DOWN), H), T


def second_fundamental_closed_form(v: VectorField, c: Connection, R: Tensor | None = None) -> Tensor:
    """H^h_{ji} = d_j d_i v^h + v^t d_t G^h_{ji} - v^t R^h_{tji}
    + G^h_{mi} d_j v^m + G^h_{jm} d_i v^m - G^t_{ji} d_t v^h.

    The curvature term carries a minus sign: H = L_v Gamma - v^t R^h_{tji},
    which for a torsion-free connection equals nabla_j nabla_i v^h.
    """
    _require_symmetric(c)
    R = R or curvature(c)
    M = v.manifold
    n, x, G, V, Rc = M.dim, M.coords, c.components, v.components, R.components
    dv = build_array((n, n), lambda a, s: differentiate(V[a], x[s]))
    s_dd = faults.sign("sff.second_derivative")
    s_r = faults.sign("sff.curvature_term")

    def comp(h, j, i):
        return add_all([
            s_dd * differentiate(dv[h, i], x[j]),
            *(V[t] * differentiate(G[h, j, i], x[t]) for t in range(n)),
            *(-s_r * (V[t] * Rc[h, t, j, i]) for t in range(n)),
            *(G[h, m, i] * dv[m, j] for m in range(n)),
            *(G[h, j, m] * dv[m, i] for m in range(n)),
            *(-(G[t, j, i] * dv[h, t]) for t in range(n)),
        ])

    return Tensor(M, (UP, DOWN, DOWN), build_array((n, n, n), comp))


def second_fundamental(v: VectorField, c: Connection, check: bool = True,
                       opts: CheckOptions = DEFAULT_CHECK) -> Tensor:
    """Closed-form H; with ``check`` the frame residual minus H^k_{ji} C_(k)
    must vanish in every bundle component."""
    H = second_fundamental_closed_form(v, c)
    if check:
        res = gauss_relation_residual(v, c, H, opts)
        if res.value > opts.tol:
            raise InconsistencyError("frame residual is not H^k_{ji} C_(k)", res)
    return H


def gauss_relation_residual(v: VectorField, c: Connection, H: Tensor,
                            opts: CheckOptions = DEFAULT_CHECK, frame: AdaptedFrame | None = None,
                            gc: BundleConnection | None = None) -> ex.Residual:
    frame = frame or adapted_frame(v)
    E = gauss_residual_vector(v, c, frame, gc)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    rhs = build_array((N, n, n), lambda A, j, i: add_all(H.components[k, j, i] * frame.C[A, k] for k in range(n)))
    return tensor_residual(E, rhs, v.manifold.domain, opts)


@dataclass(frozen=True, eq=False)
class GaussDecomposition:
    tangential: Connection
    normal: Tensor


def section_derivative(v: VectorField, c: Connection, frame: AdaptedFrame | None = None,
                       gc: BundleConnection | None = None) -> np.ndarray:
    """nabla-bar_{B_(j)} B_(i) restricted to the section, as [A, j, i].

    Computed with the bundle covariant derivative, B_(i) extended off the
    section as a field independent of the fibre coordinates."""
    frame = frame or adapted_frame(v)
    gc = gc or horizontal_lift_connection(c)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    out = np.empty((N, n, n), dtype=object)
    for j, i in itertools.product(range(n), repeat=2):
        out[:, j, i] = bundle_covariant_derivative(gc, frame.B[:, j], frame.B[:, i]).components
    return restrict(out, v)


def gauss_split(tangential: Connection, normal: Tensor, frame: AdaptedFrame) -> np.ndarray:
    """Gamma^h_{ji} B_(h) + H^h_{ji} C_(h) as [A, j, i]."""
    n = normal.manifold.dim
    G, H = tangential.components, normal.components
    return build_array((2 * n, n, n), lambda A, j, i: add_all([
        *(G[h, j, i] * frame.B[A, h] for h in range(n)),
        *(H[h, j, i] * frame.C[A, h] for h in range(n)),
    ]))


def gauss_decomposition(v: VectorField, c: Connection, check: bool = True,
                        opts: CheckOptions = DEFAULT_CHECK) -> GaussDecomposition:
    """Split nabla-bar_{B_(j)} B_(i) into its B and C parts.

    With ``check``: the split must reproduce the bundle derivative, and H must
    equal L_v Gamma - v^t R^h_{tji}.
    """
    _require_symmetric(c)
    frame = adapted_frame(v)
    gc = horizontal_lift_connection(c)
    tangential = induced_connection(v, c, check=check, opts=opts, frame=frame, gc=gc)
    H = second_fundamental(v, c, check=check, opts=opts)
    if check:
        lhs = section_derivative(v, c, frame, gc)
        res = tensor_residual(lhs, gauss_split(tangential, H, frame), v.manifold.domain, opts)
        if res.value > opts.tol:
            raise InconsistencyError("bundle derivative along the section does not split", res)
        res = tensor_residual(H, lie_plus_curvature(v, c), v.manifold.domain, opts)
        if res.value > opts.tol:
            raise InconsistencyError("H differs from L_v Gamma - v^t R", res)
    return GaussDecomposition(tangential, H)


def lie_plus_curvature(v: VectorField, c: Connection, R: Tensor | None = None) -> Tensor:
    """L_v Gamma^h_{ji} - v^t R^h_{tji}."""
    R = R or curvature(c)
    L = lie_derivative_connection(v, c).components
    VR = field_curvature(v, R).components
    return Tensor(v.manifold, (UP, DOWN, DOWN), L - VR)


@dataclass(frozen=True, eq=False)
class CurvatureDecomposition:
    tangential: Tensor
    vertical: Tensor


def frame_curvature(v: VectorField, c: Connection, frame: AdaptedFrame | None = None,
                    gc: BundleConnection | None = None) -> tuple[np.ndarray, np.ndarray]:
    """R-bar(B_(k), B_(j)) B_(i) along the section, split by the inverse rows.

    Returns (tangential [h,k,j,i], vertical [h,k,j,i])."""
    frame = frame or adapted_frame(v)
    gc = gc or horizontal_lift_connection(c)
    n, N = v.manifold.dim, 2 * v.manifold.dim
    Rb = restrict(bundle_curvature(gc), v)
    B = frame.B
    L = zeros((N, n, n, n))
    for A, k, j, i in itertools.product(range(N), range(n), range(n), range(n)):
        if k == j:
            continue
        if k > j:
            L[A, k, j, i] = -L[A, j, k, i]
            continue
        L[A, k, j, i] = add_all(
            Rb[A, M, J, I] * B[M, k] * B[J, j] * B[I, i]
            for M in range(N) for J in range(N) for I in range(N)
            if not (M == J or Rb[A, M, J, I].is_zero)
        )
    tan = build_array((n,) * 4, lambda h, k, j, i: add_all(frame.B_inv[h, A] * L[A, k, j, i] for A in range(N)))
    ver = build_array((n,) * 4, lambda h, k, j, i: add_all(frame.C_inv[h, A] * L[A, k, j, i] for A in range(N)))
    return tan, ver


def vertical_curvature_terms(v: VectorField, c: Connection, R: Tensor | None = None) -> tuple[Tensor, np.ndarray]:
    """(L_v R, nabla_k(v^t R^h_{tji}) - nabla_j(v^t R^h_{tki}))."""
    R = R or curvature(c)
    LR = lie_derivative_tensor(v, R)
    A = antisymmetrized_derivative(field_curvature(v, R), c)
    return LR, A


def curvature_split_closed_form(v: VectorField, c: Connection) -> CurvatureDecomposition:
    """Tangential R^h_{kji}; vertical L_v R^h_{kji} - [nabla_k(v^t R^h_{tji}) - nabla_j(v^t R^h_{tki})]."""
    R = curvature(c)
    LR, A = vertical_curvature_terms(v, c, R)
    return CurvatureDecomposition(R, Tensor(v.manifold, R.variance, LR.components - A))


def curvature_decomposition(v: VectorField, c: Connection, check: bool = True,
                            opts: CheckOptions = DEFAULT_CHECK) -> CurvatureDecomposition:
    _require_symmetric(c)
    closed = curvature_split_closed_form(v, c)
    if check:
        tan, ver = frame_curvature(v, c)
        dom = v.manifold.domain
        for what, lhs, rhs in (("tangential", tan, closed.tangential), ("vertical", ver, closed.vertical)):
            res = tensor_residual(lhs, rhs, dom, opts)
            if res.value > opts.tol:
                raise InconsistencyError(f"{what} part of the section curvature mismatch", res)
    return closed


# ---------------------------------------------------------------------------
# predicates

@dataclass(frozen=True)
class GeodesicVerdict:
    h_zero: bool
    lie_zero: bool
    curvature_term_zero: bool
    h_residual: float = 0.0

    @property
    def conditions(self) -> bool:
        return self.lie_zero and self.curvature_term_zero

    @property
    def holds(self) -> bool:
        """The biconditional H = 0  <=>  (L_v Gamma = 0 and v^t R = 0)."""
        return self.h_zero == self.conditions

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.h_zero, self.lie_zero, self.curvature_term_zero)


@dataclass(frozen=True)
class TangencyVerdict:
    vertical_zero: bool
    lie_zero: bool
    derivative_term_zero: bool
    vertical_residual: float = 0.0

    @property
    def conditions(self) -> bool:
        return self.lie_zero and self.derivative_term_zero

    @property
    def holds(self) -> bool:
        return self.vertical_zero == self.conditions

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.vertical_zero, self.lie_zero, self.derivative_term_zero)


def _zero_residual(arr, dom, opts) -> float:
    arr = arr.components if hasattr(arr, "components") else arr
    return tensor_residual(arr, zeros(arr.shape), dom, opts).value


def is_totally_geodesic(v: VectorField, c: Connection, domain=None,
                        opts: CheckOptions = DEFAULT_CHECK, tol: float | None = None) -> GeodesicVerdict:
    """Evaluate H = 0, L_v Gamma = 0 and v^t R^h_{tji} = 0 on the domain.

    H is taken from the frame route (projection of the bundle derivative
    along the section), so the verdict reflects the lifted geometry."""
    _require_symmetric(c)
    dom = domain or v.manifold.domain
    if tol is not None:
        opts = CheckOptions(opts.points, tol, opts.seed)
    R = curvature(c)
    H, _ = second_fundamental_from_frame(v, c)
    h_res = _zero_residual(H, dom, opts)
    return GeodesicVerdict(
        h_zero=h_res <= opts.tol,
        lie_zero=is_zero_array(lie_derivative_connection(v, c), dom, opts),
        curvature_term_zero=is_zero_array(field_curvature(v, R), dom, opts),
        h_residual=h_res,
    )


def is_curvature_tangent(v: VectorField, c: Connection, domain=None,
                         opts: CheckOptions = DEFAULT_CHECK, tol: float | None = None) -> TangencyVerdict:
    """Evaluate (vertical part of R-bar(B,B)B = 0, L_v R = 0,
    nabla_k(v^t R_{tji}) - nabla_j(v^t R_{tki}) = 0) on the domain."""
    _require_symmetric(c)
    dom = domain or v.manifold.domain
    if tol is not None:
        opts = CheckOptions(opts.points, tol, opts.seed)
    _, ver = frame_curvature(v, c)
    LR, A = vertical_curvature_terms(v, c)
    v_res = _zero_residual(ver, dom, opts)
    return TangencyVerdict(
        vertical_zero=v_res <= opts.tol,
        lie_zero=is_zero_array(LR, dom, opts),
        derivative_term_zero=is_zero_array(A, dom, opts),
        vertical_residual=v_res,
    )
