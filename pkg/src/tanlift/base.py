"""Tensor algebra on a coordinate patch of the base manifold.

Index conventions
-----------------
* ``Connection.components[k, j, i]`` is Gamma^k_{ji}; j is the
  differentiation slot: nabla_j X^k = d_j X^k + Gamma^k_{ji} X^i.
* ``curvature(c)[h, k, j, i]`` is R^h_{kji} with
  (nabla_k nabla_j - nabla_j nabla_k) W^h = R^h_{kjt} W^t.
* Tensor component arrays list indices in written order; ``covariant_derivative``
  puts the new derivative index on axis 0.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, ZERO, add_all, differentiate

UP, DOWN = "up", "down"


class GeometryError(ValueError):
    pass


class DegenerateMetricError(GeometryError):
    def __init__(self, point: Mapping[str, float], det: float):
        super().__init__(f"metric is degenerate at {dict(point)} (det = {det!r})")
        self.point = dict(point)


class TorsionError(GeometryError):
    """Raised by operations that need a torsion-free connection."""


class InconsistencyError(GeometryError):
    """An identity that must hold by construction failed: a convention bug."""

    def __init__(self, what: str, res: ex.Residual):
        super().__init__(f"{what}: residual {res.value:.3e} at {res.witness}")
        self.residual = res


@dataclass(frozen=True)
class CheckOptions:
    """Sampling parameters for identity checks."""

    points: int = 20
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("points must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


DEFAULT_CHECK = CheckOptions()


@dataclass(frozen=True, eq=False)
class Manifold:
    name: str
    coords: tuple[str, ...]
    domain: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def symbols(self) -> list[Expr]:
        return [ex.var(c) for c in self.coords]


def build_array(shape: Sequence[int], fn: Callable[..., Expr]) -> np.ndarray:
    out = np.empty(tuple(shape), dtype=object)
    for idx in np.ndindex(*shape):
        out[idx] = ex.as_expr(fn(*idx))
    return out


def zeros(shape: Sequence[int]) -> np.ndarray:
    out = np.empty(tuple(shape), dtype=object)
    out.fill(ZERO)
    return out


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=object)
    for idx in np.ndindex(*a.shape):
        a[idx] = ex.as_expr(a[idx])
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Tensor:
    manifold: Manifold
    variance: tuple[str, ...]
    components: np.ndarray

    def __post_init__(self):
        comps = _frozen(self.components)
        object.__setattr__(self, "components", comps)
        n = self.manifold.dim
        if comps.ndim != len(self.variance):
            raise GeometryError("signature length differs from array rank")
        if any(s != n for s in comps.shape):
            raise GeometryError(f"component extents {comps.shape} do not match dimension {n}")
        if any(v not in (UP, DOWN) for v in self.variance):
            raise GeometryError(f"bad variance tags {self.variance}")

    @property
    def rank(self) -> int:
        return len(self.variance)

    def __getitem__(self, idx):
        return self.components[idx]


@dataclass(frozen=True, eq=False)
class Connection:
    manifold: Manifold
    components: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        comps = _frozen(self.components)
        object.__setattr__(self, "components", comps)
        n = self.manifold.dim
        if comps.shape != (n, n, n):
            raise GeometryError(f"connection array shape {comps.shape}, expected {(n, n, n)}")

    def __getitem__(self, idx):
        return self.components[idx]

    def torsion_residual(self, opts: CheckOptions = DEFAULT_CHECK) -> ex.Residual:
        g = self.components
        return ex.residual(list(g.ravel()), list(g.transpose(0, 2, 1).ravel()),
                           self.manifold.domain, opts.points, opts.seed)


@dataclass(frozen=True, eq=False)
class VectorField:
    manifold: Manifold
    components: np.ndarray
    name: str = ""

    def __post_init__(self):
        comps = _frozen(self.components)
        object.__setattr__(self, "components", comps)
        if comps.shape != (self.manifold.dim,):
            raise GeometryError(f"vector field has {comps.shape} components, expected {self.manifold.dim}")

    def __getitem__(self, idx):
        return self.components[idx]

    def as_tensor(self) -> Tensor:
        return Tensor(self.manifold, (UP,), self.components)


def tensor_residual(a, b, domain, opts: CheckOptions = DEFAULT_CHECK) -> ex.Residual:
    """Scale-free max residual between two component arrays (or Tensors)."""
    a = a.components if hasattr(a, "components") else np.asarray(a, dtype=object)
    b = b.components if hasattr(b, "components") else np.asarray(b, dtype=object)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return ex.residual(list(a.ravel()), list(b.ravel()), domain, opts.points, opts.seed)


def is_zero_array(a, domain, opts: CheckOptions = DEFAULT_CHECK) -> bool:
    a = a.components if hasattr(a, "components") else np.asarray(a, dtype=object)
    return tensor_residual(a, zeros(a.shape), domain, opts).value <= opts.tol


# ---------------------------------------------------------------------------
# metric and Levi-Civita connection

def _det(m: np.ndarray) -> Expr:
    n = m.shape[0]
    if n == 0:
        return ex.ONE
    if n == 1:
        return m[0, 0]
    if n == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    terms = []
    for j in range(n):
        if m[0, j].is_zero:
            continue
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        t = m[0, j] * _det(minor)
        terms.append(t if j % 2 == 0 else -t)
    return add_all(terms)


def metric_inverse(g: np.ndarray) -> tuple[np.ndarray, Expr]:
    """Symbolic inverse via adjugate / determinant.  Returns (inverse, det)."""
    n = g.shape[0]
    diagonal = all(g[i, j].is_zero for i in range(n) for j in range(n) if i != j)
    det = _det(g)
    if diagonal:
        return build_array((n, n), lambda i, j: ex.ONE / g[i, i] if i == j else ZERO), det
    def cof(i, j):
        minor = np.delete(np.delete(g, i, axis=0), j, axis=1)
        c = _det(minor)
        return c if (i + j) % 2 == 0 else -c
    # inverse[i, j] = cofactor[j, i] / det
    return build_array((n, n), lambda i, j: cof(j, i) / det), det


def check_nondegenerate(g: Tensor, opts: CheckOptions = DEFAULT_CHECK) -> None:
    _, det = metric_inverse(g.components)
    dom = g.manifold.domain
    for p in ex.sample_points(dom, opts.points, opts.seed):
        try:
            d = ex.evaluate(det, p)
        except ex.DomainError:
            raise DegenerateMetricError(p, float("nan")) from None
        scale = max(abs(ex.evaluate(e, p)) for e in g.components.ravel())
        if not np.isfinite(d) or abs(d) <= 1e-12 * max(1.0, scale) ** g.manifold.dim:
            raise DegenerateMetricError(p, d)


def christoffel_from_metric(g: Tensor, check: bool = True, opts: CheckOptions = DEFAULT_CHECK) -> Connection:
    """Levi-Civita connection:
    Gamma^k_{ji} = 1/2 g^{km} (d_j g_{mi} + d_i g_{jm} - d_m g_{ji})."""
    if g.variance != (DOWN, DOWN):
        raise GeometryError("metric must be a (0,2) tensor")
    M = g.manifold
    n, x = M.dim, M.coords
    gc = g.components
    if check:
        res = tensor_residual(gc, gc.T, M.domain, opts)
        if res.value > opts.tol:
            raise GeometryError(f"metric is not symmetric (residual {res.value:.3e})")
        check_nondegenerate(g, opts)
    ginv, _ = metric_inverse(gc)
    dg = build_array((n, n, n), lambda a, b, c: differentiate(gc[b, c], x[a]))  # dg[a,b,c] = d_a g_bc

    def gamma(k, j, i):
        return ex.const(0.5) * add_all(
            ginv[k, m] * (dg[j, m, i] + dg[i, j, m] - dg[m, j, i]) for m in range(n)
        )

    return Connection(M, build_array((n, n, n), gamma), symmetric=True)


# ---------------------------------------------------------------------------
# curvature and derivatives

def curvature(c: Connection) -> Tensor:
    """R^h_{kji} = d_k G^h_{ji} - d_j G^h_{ki} + G^h_{kt} G^t_{ji} - G^h_{jt} G^t_{ki}."""
    M = c.manifold
    n, x, G = M.dim, M.coords, c.components
    R = zeros((n, n, n, n))
    for h, k, j, i in itertools.product(range(n), repeat=4):
        if k == j:
            continue
        if k > j:
            R[h, k, j, i] = -R[h, j, k, i]
            continue
        R[h, k, j, i] = add_all([
            differentiate(G[h, j, i], x[k]),
            -differentiate(G[h, k, i], x[j]),
            *(G[h, k, t] * G[t, j, i] for t in range(n)),
            *(-(G[h, j, t] * G[t, k, i]) for t in range(n)),
        ])
    return Tensor(M, (UP, DOWN, DOWN, DOWN), R)


def covariant_derivative(t: Tensor, c: Connection) -> Tensor:
    """nabla_k T with k prepended as axis 0."""
    M = t.manifold
    n, x, G = M.dim, M.coords, c.components
    T = t.components

    def comp(k, *idx):
        terms = [differentiate(T[idx], x[k])]
        for pos, var_ in enumerate(t.variance):
            for s in range(n):
                shifted = idx[:pos] + (s,) + idx[pos + 1:]
                if var_ == UP:
                    terms.append(G[idx[pos], k, s] * T[shifted])
                else:
                    terms.append(-(G[s, k, idx[pos]] * T[shifted]))
        return add_all(terms)

    return Tensor(M, (DOWN,) + t.variance, build_array((n,) * (t.rank + 1), comp))


def lie_derivative_tensor(v: VectorField, t: Tensor) -> Tensor:
    """v^s d_s T - (d_s v^a) T^{..s..} per up index + (d_b v^s) T_{..s..} per down index."""
    M = t.manifold
    n, x = M.dim, M.coords
    T, V = t.components, v.components
    dv = build_array((n, n), lambda a, s: differentiate(V[a], x[s]))  # dv[a, s] = d_s v^a

    def comp(*idx):
        terms = [V[s] * differentiate(T[idx], x[s]) for s in range(n)]
        for pos, var_ in enumerate(t.variance):
            for s in range(n):
                shifted = idx[:pos] + (s,) + idx[pos + 1:]
                if var_ == UP:
                    terms.append(-(T[shifted] * dv[idx[pos], s]))
                else:
                    terms.append(T[shifted] * dv[s, idx[pos]])
        return add_all(terms)

    return Tensor(M, t.variance, build_array(T.shape, comp))


def _require_symmetric(c: Connection) -> None:
    if not c.symmetric:
        raise TorsionError("operation requires a connection flagged symmetric (torsion-free)")


def lie_derivative_connection(v: VectorField, c: Connection) -> Tensor:
    """(L_v Gamma)^h_{ji} = d_j d_i v^h + v^t d_t G^h_{ji} + G^h_{mi} d_j v^m
    + G^h_{jm} d_i v^m - G^t_{ji} d_t v^h."""
    _require_symmetric(c)
    M = c.manifold
    n, x, G, V = M.dim, M.coords, c.components, v.components
    dv = build_array((n, n), lambda a, s: differentiate(V[a], x[s]))

    def comp(h, j, i):
        return add_all([
            differentiate(dv[h, i], x[j]),
            *(V[t] * differentiate(G[h, j, i], x[t]) for t in range(n)),
            *(G[h, m, i] * dv[m, j] for m in range(n)),
            *(G[h, j, m] * dv[m, i] for m in range(n)),
            *(-(G[t, j, i] * dv[h, t]) for t in range(n)),
        ])

    return Tensor(M, (UP, DOWN, DOWN), build_array((n, n, n), comp))


def field_curvature(v: VectorField, R: Tensor) -> Tensor:
    """The (1,2) tensor v^t R^h_{tji}, stored as [h, j, i]."""
    n = R.manifold.dim
    Rc, V = R.components, v.components
    return Tensor(R.manifold, (UP, DOWN, DOWN),
                  build_array((n, n, n), lambda h, j, i: add_all(V[t] * Rc[h, t, j, i] for t in range(n))))


def antisymmetrized_derivative(t: Tensor, c: Connection) -> np.ndarray:
    """For a (1,2) tensor T^h_{ji}: nabla_k T^h_{ji} - nabla_j T^h_{ki} as [h, k, j, i]."""
    D = covariant_derivative(t, c).components  # D[k, h, j, i]
    n = t.manifold.dim
    return build_array((n, n, n, n), lambda h, k, j, i: D[k, h, j, i] - D[j, h, k, i])


def is_infinitesimal_affine(v: VectorField, c: Connection, domain=None,
                            opts: CheckOptions = DEFAULT_CHECK, tol: float | None = None) -> bool:
    """True iff every component of L_v Gamma vanishes on the domain.  ``tol``
    overrides ``opts.tol``."""
    L = lie_derivative_connection(v, c)
    if tol is not None:
        opts = CheckOptions(opts.points, tol, opts.seed)
    return is_zero_array(L, domain or c.manifold.domain, opts)
