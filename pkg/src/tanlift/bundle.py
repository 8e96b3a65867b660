"""Objects on the tangent bundle T(M) in induced coordinates (x^h, y^h).

Bundle indices run over 0..2n-1: 0..n-1 are base directions, n..2n-1 are
fibre directions (written with a bar).  Fibre coordinates are named
``"d" + base name``.
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
    GeometryError,
    Manifold,
    Tensor,
    VectorField,
    build_array,
    curvature,
    zeros,
)
from .expr import Expr, ZERO, add_all, differentiate

DEFAULT_FIBRE_HALFWIDTH = 2.0


@dataclass(frozen=True, eq=False)
class BundleCoordinates:
    base: Manifold
    fibre: tuple[str, ...]

    @classmethod
    def of(cls, base: Manifold) -> "BundleCoordinates":
        fibre = tuple("d" + c for c in base.coords)
        clash = set(fibre) & set(base.coords)
        if clash:
            raise GeometryError(f"fibre coordinate names collide with base coordinates: {sorted(clash)}")
        return cls(base, fibre)

    @property
    def n(self) -> int:
        return self.base.dim

    @property
    def names(self) -> tuple[str, ...]:
        return self.base.coords + self.fibre

    def fibre_symbols(self) -> list[Expr]:
        return [ex.var(y) for y in self.fibre]

    def domain(self, halfwidth: float = DEFAULT_FIBRE_HALFWIDTH) -> dict[str, tuple[float, float]]:
        dom = dict(self.base.domain)
        dom.update({y: (-halfwidth, halfwidth) for y in self.fibre})
        return dom


@dataclass(frozen=True, eq=False)
class BundleConnection:
    coords: BundleCoordinates
    components: np.ndarray  # [K, J, I], 2n each

    def __getitem__(self, idx):
        return self.components[idx]


@dataclass(frozen=True, eq=False)
class BundleVectorField:
    coords: BundleCoordinates
    components: np.ndarray  # 2n

    def __getitem__(self, idx):
        return self.components[idx]


@dataclass(frozen=True, eq=False)
class BundleMetric:
    coords: BundleCoordinates
    components: np.ndarray  # 2n x 2n


def _contract_y(coords: BundleCoordinates, G: np.ndarray, h: int, i: int) -> Expr:
    """Gamma^h_i = y^j Gamma^h_{ji}."""
    y = coords.fibre_symbols()
    return add_all(y[j] * G[h, j, i] for j in range(coords.n))


def horizontal_lift_connection(c: Connection, R: Tensor | None = None) -> BundleConnection:
    """Components of the horizontal lift of c to T(M):

    base block Gamma^k_{ji}; fibre-valued blocks
    Gamma^{k-bar}_{ji} = y^s d_s Gamma^k_{ji} - y^s R^k_{sji} and
    Gamma^{k-bar}_{j-bar i} = Gamma^{k-bar}_{j i-bar} = Gamma^k_{ji};
    every other block is the zero expression.
    """
    if R is None:
        R = curvature(c)
    coords = BundleCoordinates.of(c.manifold)
    n, x = coords.n, c.manifold.coords
    y = coords.fibre_symbols()
    G, Rc = c.components, R.components
    s_dgamma = faults.sign("lift.fibre_dgamma")
    s_curv = faults.sign("lift.fibre_curvature")
    s_base = faults.sign("lift.base_block")
    s_left = faults.sign("lift.mixed_barred_first")
    s_right = faults.sign("lift.mixed_barred_second")

    out = zeros((2 * n,) * 3)
    for k, j, i in itertools.product(range(n), repeat=3):
        out[k, j, i] = s_base * G[k, j, i]
        out[n + k, j, i] = add_all([
            *(s_dgamma * (y[s] * differentiate(G[k, j, i], x[s])) for s in range(n)),
            *(-s_curv * (y[s] * Rc[k, s, j, i]) for s in range(n)),
        ])
        out[n + k, n + j, i] = s_left * G[k, j, i]
        out[n + k, j, n + i] = s_right * G[k, j, i]
    return BundleConnection(coords, out)


def vanishing_blocks(gc: BundleConnection) -> dict[str, np.ndarray]:
    """The blocks of the lifted connection that must be identically zero."""
    n = gc.coords.n
    G = gc.components
    lo, hi = slice(0, n), slice(n, 2 * n)
    return {
        "G^k_{j ibar}": G[lo, lo, hi],
        "G^k_{jbar i}": G[lo, hi, lo],
        "G^k_{jbar ibar}": G[lo, hi, hi],
        "G^kbar_{jbar ibar}": G[hi, hi, hi],
    }


def horizontal_lift_metric(g: Tensor, c: Connection) -> BundleMetric:
    """^H g = [[Gamma^m_i g_mj + Gamma^m_j g_im, g_ij], [g_ij, 0]] with Gamma^m_i = y^s Gamma^m_{si}."""
    coords = BundleCoordinates.of(g.manifold)
    n = coords.n
    gc, G = g.components, c.components
    Gy = build_array((n, n), lambda m, i: _contract_y(coords, G, m, i))
    out = zeros((2 * n, 2 * n))
    for i, j in itertools.product(range(n), repeat=2):
        out[i, j] = add_all([*(Gy[m, i] * gc[m, j] for m in range(n)),
                             *(Gy[m, j] * gc[i, m] for m in range(n))])
        out[i, n + j] = gc[i, j]
        out[n + i, j] = gc[i, j]
    return BundleMetric(coords, out)


def vertical_lift(X: VectorField) -> BundleVectorField:
    coords = BundleCoordinates.of(X.manifold)
    n = coords.n
    comps = np.empty(2 * n, dtype=object)
    comps[:n] = ZERO
    comps[n:] = list(X.components)
    return BundleVectorField(coords, comps)


def horizontal_lift_vector(X: VectorField, c: Connection) -> BundleVectorField:
    """^H X = (X^h, -Gamma^h_s X^s) with Gamma^h_s = y^j Gamma^h_{js}."""
    coords = BundleCoordinates.of(X.manifold)
    n = coords.n
    G, V = c.components, X.components
    s = faults.sign("lift.horizontal_vector")
    comps = np.empty(2 * n, dtype=object)
    comps[:n] = list(V)
    for h in range(n):
        comps[n + h] = -s * add_all(_contract_y(coords, G, h, t) * V[t] for t in range(n))
    return BundleVectorField(coords, comps)


def bundle_covariant_derivative(gc: BundleConnection, U, W) -> BundleVectorField:
    """(nabla-bar_U W)^K = U^J d_J W^K + Gamma-bar^K_{JI} U^J W^I."""
    coords = gc.coords
    names = coords.names
    N = len(names)
    Uc = U.components if hasattr(U, "components") else U
    Wc = W.components if hasattr(W, "components") else W
    G = gc.components

    def comp(K):
        return add_all([
            *(Uc[J] * differentiate(Wc[K], names[J]) for J in range(N)),
            *(G[K, J, I] * Uc[J] * Wc[I] for J in range(N) for I in range(N)),
        ])

    return BundleVectorField(coords, build_array((N,), comp))


def base_covariant_derivative(c: Connection, X: VectorField, Y: VectorField) -> VectorField:
    """(nabla_X Y)^h = X^j d_j Y^h + Gamma^h_{ji} X^j Y^i."""
    M = c.manifold
    n, x = M.dim, M.coords
    G, Xc, Yc = c.components, X.components, Y.components
    return VectorField(M, build_array((n,), lambda h: add_all([
        *(Xc[j] * differentiate(Yc[h], x[j]) for j in range(n)),
        *(G[h, j, i] * Xc[j] * Yc[i] for j in range(n) for i in range(n)),
    ])))


LIFT_CONDITIONS = ("VV", "VH", "HV", "HH")


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    max_residual: float
    witness: dict | None


def lift_condition_pairs(c: Connection, gc: BundleConnection, X: VectorField, Y: VectorField):
    """Left and right sides of the four defining conditions of the lift.

    Returns {name: (lhs components, rhs components)}.
    """
    VX, VY = vertical_lift(X), vertical_lift(Y)
    HX, HY = horizontal_lift_vector(X, c), horizontal_lift_vector(Y, c)
    DXY = base_covariant_derivative(c, X, Y)
    N = 2 * c.manifold.dim
    return {
        "VV": (bundle_covariant_derivative(gc, VX, VY).components, zeros((N,))),
        "VH": (bundle_covariant_derivative(gc, VX, HY).components, zeros((N,))),
        "HV": (bundle_covariant_derivative(gc, HX, VY).components, vertical_lift(DXY).components),
        "HH": (bundle_covariant_derivative(gc, HX, HY).components, horizontal_lift_vector(DXY, c).components),
    }


def verify_lift_conditions(c: Connection, X: VectorField, Y: VectorField, domain=None,
                           opts: CheckOptions = DEFAULT_CHECK,
                           fibre_halfwidth: float = DEFAULT_FIBRE_HALFWIDTH,
                           gc: BundleConnection | None = None) -> dict[str, ConditionResult]:
    """Check all four lift conditions componentwise over the bundle domain."""
    gc = gc or horizontal_lift_connection(c)
    dom = dict(domain or gc.coords.domain(fibre_halfwidth))
    out = {}
    for name, (lhs, rhs) in lift_condition_pairs(c, gc, X, Y).items():
        res = ex.residual(list(lhs), list(rhs), dom, opts.points, opts.seed)
        ok = res.value <= opts.tol
        out[name] = ConditionResult(name, ok, res.value, None if ok else res.witness)
    return out


def bundle_curvature(gc: BundleConnection) -> np.ndarray:
    """R-bar^K_{MJI} over all 2n bundle indices and coordinates."""
    names = gc.coords.names
    N = len(names)
    G = gc.components
    R = zeros((N, N, N, N))
    for K, M, J, I in itertools.product(range(N), repeat=4):
        if M == J:
            continue
        if M > J:
            R[K, M, J, I] = -R[K, J, M, I]
            continue
        R[K, M, J, I] = add_all([
            differentiate(G[K, J, I], names[M]),
            -differentiate(G[K, M, I], names[J]),
            *(G[K, M, T] * G[T, J, I] for T in range(N)),
            *(-(G[K, J, T] * G[T, M, I]) for T in range(N)),
        ])
    return R
