"""Run the identity and proposition suite over a workspace."""
from __future__ import annotations

import itertools
import json
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import expr as ex
from . import faults
from .base import (
    CheckOptions,
    GeometryError,
    Manifold,
    Tensor,
    UP,
    VectorField,
    antisymmetrized_derivative,
    build_array,
    covariant_derivative,
    curvature,
    lie_derivative_connection,
    lie_derivative_tensor,
    tensor_residual,
    zeros,
)
from .bundle import (
    DEFAULT_FIBRE_HALFWIDTH,
    LIFT_CONDITIONS,
    horizontal_lift_connection,
    lift_condition_pairs,
    vanishing_blocks,
)
from .dsl import ManifoldDecl, Workspace
from .expr import sample_points  # noqa: F401  (re-exported)
from .section import (
    adapted_frame,
    frame_curvature,
    gauss_relation_residual,
    gauss_split,
    induced_connection,
    is_curvature_tangent,
    is_totally_geodesic,
    lie_plus_curvature,
    second_fundamental_closed_form,
    second_fundamental_from_frame,
    curvature_split_closed_form,
    section_derivative,
)

MANIFOLD_ANCHORS = ("Cond1", "Eq2", "Bianchi", "Commutator", "Metricity")
PAIR_ANCHORS = ("Eq7", "Eq8", "Eq9", "Eq10", "Eq11", "Eq12", "LieCommute", "Eq15", "Prop2", "Prop3")
ANCHORS = MANIFOLD_ANCHORS + PAIR_ANCHORS

DESCRIPTIONS = {
    "Cond1": "lift conditions: D_{VX}VY = 0, D_{VX}HY = 0, D_{HX}VY = V(D_X Y), D_{HX}HY = H(D_X Y)",
    "Eq2": "lifted connection: four blocks identically zero; Gbar^kbar_{ji} affine in the fibre coordinates",
    "Eq7": "adapted frame duality: B_A^h B_j^A = C_A^h C_j^A = delta, B_A^h C_j^A = C_A^h B_j^A = 0",
    "Eq8": "induced connection (d_j B_i^A + Gbar^A_{MN} B_j^M B_i^N) B_A^h equals Gamma^h_{ji}",
    "Eq9": "d_j B_i^A + Gbar^A_{MN} B_j^M B_i^N - Gamma^h_{ji} B_h^A = H^k_{ji} C_(k)^A",
    "Eq10": "H from the frame residual equals the closed form in v, d v, d d v, Gamma, R",
    "Eq11": "H^h_{ji} = L_v Gamma^h_{ji} - v^t R^h_{tji}",
    "Eq12": "Dbar_{B_(j)} B_(i) = Gamma^h_{ji} B_(h) + H^h_{ji} C_(h)",
    "Eq15": "Rbar(B_k, B_j) B_i = R^h_{kji} B_(h) + [L_v R^h_{kji} - (D_k(v^t R^h_{tji}) - D_j(v^t R^h_{tki}))] C_(h)",
    "LieCommute": "D_k(L_v Gamma^h_{ji}) - D_j(L_v Gamma^h_{ki}) = L_v R^h_{kji}",
    "Bianchi": "first Bianchi identity R^h_{kji} + R^h_{jik} + R^h_{ikj} = 0",
    "Commutator": "(D_k D_j - D_j D_k) W^h = R^h_{kjt} W^t for random polynomial W",
    "Metricity": "D_k g_{ji} = 0 for the Levi-Civita connection",
    "Prop2": "totally geodesic (H = 0) iff L_v Gamma = 0 and v^t R^h_{tji} = 0",
    "Prop3": "curvature of tangent fields stays tangent iff L_v R = 0 and D_k(v^t R_{tji}) - D_j(v^t R_{tki}) = 0",
    "Setup": "workspace object construction",
}


class SuiteError(RuntimeError):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    points: int = 20
    tol: float = 1e-9
    fibre_halfwidth: float = DEFAULT_FIBRE_HALFWIDTH
    checks: tuple[str, ...] = ANCHORS
    random_fields: int = 5
    faults: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be > 0")
        if self.points < 1:
            raise ValueError("points must be >= 1")
        unknown = set(self.checks) - set(ANCHORS)
        if unknown:
            raise ValueError(f"unknown check anchors: {sorted(unknown)}")

    @property
    def curvature_tol(self) -> float:
        # one more differentiation level than the other section identities
        return 10 * self.tol


@dataclass(frozen=True)
class CheckResult:
    anchor: str
    name: str
    manifold: str
    field: str | None
    status: str
    max_residual: float
    witness: dict | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def sort_key(self):
        return (self.anchor, self.manifold, self.field or "", self.name)


@dataclass
class VerificationReport:
    workspace: str
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def by_anchor(self, anchor: str) -> list[CheckResult]:
        return [c for c in self.checks if c.anchor == anchor]

    def summary(self) -> dict:
        return {"total": len(self.checks), "passed": sum(c.passed for c in self.checks),
                "failed": len(self.failures)}

    def to_dict(self, objects: dict | None = None) -> dict:
        return {
            "workspace": self.workspace,
            "seed": self.seed,
            "checks": [asdict(c) for c in self.checks],
            "summary": self.summary(),
            "objects": objects or {},
        }

    def to_json(self, objects: dict | None = None) -> str:
        return json.dumps(self.to_dict(objects), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            where = c.manifold + (f"/{c.field}" if c.field else "")
            line = f"{c.status.upper():4}  {c.anchor:<10} {where:<22} {c.name:<24} max_residual={c.max_residual:.3e}"
            if c.detail:
                line += f"  [{c.detail}]"
            if c.witness:
                line += "  witness=" + ", ".join(f"{k}={v:.6g}" for k, v in sorted(c.witness.items()))
            lines.append(line)
        s = self.summary()
        lines.append(f"{s['passed']}/{s['total']} checks passed")
        return "\n".join(lines)


def _seed(base: int, *parts) -> int:
    return zlib.crc32(":".join(map(str, (base,) + parts)).encode()) & 0x7FFFFFFF


def random_polynomial_fields(M: Manifold, count: int, seed: int, degree: int = 2) -> list[VectorField]:
    """Seeded vector fields with integer-coefficient polynomial components."""
    rng = np.random.default_rng(seed)
    xs = M.symbols()
    monomials = [ex.ONE]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(M.dim), d):
            m = ex.ONE
            for a in combo:
                m = m * xs[a]
            monomials.append(m)
    out = []
    for f in range(count):
        comps = [ex.add_all(int(c) * m for c, m in zip(rng.integers(-2, 3, len(monomials)), monomials))
                 for _ in range(M.dim)]
        out.append(VectorField(M, np.array(comps, dtype=object), f"random{f}"))
    return out


def coordinate_fields(M: Manifold) -> list[VectorField]:
    n = M.dim
    return [VectorField(M, np.array([ex.ONE if h == a else ex.ZERO for h in range(n)], dtype=object),
                        f"d_{M.coords[a]}") for a in range(n)]


class _ManifoldRun:
    def __init__(self, decl: ManifoldDecl, cfg: SuiteConfig, report: VerificationReport):
        self.decl = decl
        self.cfg = cfg
        self.report = report
        self.M = decl.manifold()

    def opts(self, *parts, tol=None) -> CheckOptions:
        return CheckOptions(self.cfg.points, tol or self.cfg.tol, _seed(self.cfg.seed, self.M.name, *parts))

    def add(self, anchor, name, res: ex.Residual | float, field_=None, tol=None, ok=None, detail=""):
        tol = tol or self.cfg.tol
        value = res if isinstance(res, float) else res.value
        witness = None if isinstance(res, float) else res.witness
        passed = value <= tol if ok is None else ok
        self.report.checks.append(CheckResult(
            anchor, name, self.M.name, field_, "pass" if passed else "fail",
            float(value), None if passed else witness, detail))

    def run(self):
        cfg = self.cfg
        want = set(cfg.checks)
        try:
            self.c = self.decl.connection_object(self.M, self.opts("setup"))
            if not self.c.symmetric:
                raise GeometryError("the identity suite needs a connection flagged symmetric")
            self.R = curvature(self.c)
            self.gc = horizontal_lift_connection(self.c, self.R)
        except (GeometryError, ex.ExprError) as err:
            self.report.checks.append(CheckResult("Setup", "connection", self.M.name, None, "fail",
                                                  float("inf"), None, str(err)))
            return False
        try:
            if "Cond1" in want:
                self.lift_conditions()
            if "Eq2" in want:
                self.lift_blocks()
            if "Bianchi" in want:
                self.bianchi()
            if "Commutator" in want:
                self.commutator()
            if "Metricity" in want and self.decl.metric is not None:
                self.metricity()
            for fname in self.decl.fields:
                self.pair(self.decl.field(fname, self.M), want)
        except ex.UnsampleableError as err:
            self.report.checks.append(CheckResult("Setup", "sampling", self.M.name, None, "fail",
                                                  float("inf"), None, str(err)))
            return False
        return True

    # -- manifold-level checks -------------------------------------------
    def lift_conditions(self):
        M, cfg = self.M, self.cfg
        fields = coordinate_fields(M)
        pairs = [(X, Y) for X in fields for Y in fields]
        rnd = random_polynomial_fields(M, cfg.random_fields, _seed(cfg.seed, M.name, "random-fields"))
        pairs += [(rnd[i], rnd[(i + 1) % len(rnd)]) for i in range(len(rnd))]
        dom = self.gc.coords.domain(cfg.fibre_halfwidth)
        lhs = {k: [] for k in LIFT_CONDITIONS}
        rhs = {k: [] for k in LIFT_CONDITIONS}
        for X, Y in pairs:
            for k, (l, r) in lift_condition_pairs(self.c, self.gc, X, Y).items():
                lhs[k].extend(l)
                rhs[k].extend(r)
        for k in LIFT_CONDITIONS:
            opts = self.opts("Cond1", k)
            res = ex.residual(lhs[k], rhs[k], dom, opts.points, opts.seed)
            self.add("Cond1", f"lift {k}", res, detail=f"{len(pairs)} field pairs")

    def lift_blocks(self):
        blocks = vanishing_blocks(self.gc)
        structural = all(e.is_zero for b in blocks.values() for e in b.ravel())
        n = self.M.dim
        coords = self.gc.coords
        second = [ex.differentiate(ex.differentiate(self.gc.components[n + k, j, i], ya), yb)
                  for k, j, i in itertools.product(range(n), repeat=3)
                  for ya in coords.fibre for yb in coords.fibre]
        opts = self.opts("Eq2")
        res = ex.residual(second, [ex.ZERO] * len(second), coords.domain(self.cfg.fibre_halfwidth),
                          opts.points, opts.seed)
        self.add("Eq2", "vanishing blocks", 0.0 if structural else float("inf"), ok=structural,
                 detail="structurally zero" if structural else "non-zero expression in a vanishing block")
        self.add("Eq2", "fibre affine", res)

    def bianchi(self):
        R = self.R.components
        n = self.M.dim
        cyc = build_array((n,) * 4, lambda h, k, j, i: R[h, k, j, i] + R[h, j, i, k] + R[h, i, k, j])
        self.add("Bianchi", "first Bianchi", tensor_residual(cyc, zeros(cyc.shape), self.M.domain, self.opts("Bianchi")))

    def commutator(self):
        M, c, n = self.M, self.c, self.M.dim
        R = self.R.components
        worst = None
        for W in random_polynomial_fields(M, 3, _seed(self.cfg.seed, M.name, "commutator-fields")):
            D2 = covariant_derivative(covariant_derivative(W.as_tensor(), c), c).components  # [k, j, h]
            lhs = build_array((n, n, n), lambda h, k, j: D2[k, j, h] - D2[j, k, h])
            rhs = build_array((n, n, n), lambda h, k, j: ex.add_all(R[h, k, j, t] * W[t] for t in range(n)))
            res = tensor_residual(lhs, rhs, M.domain, self.opts("Commutator", W.name))
            if worst is None or res.value > worst.value:
                worst = res
        self.add("Commutator", "curvature sign", worst)

    def metricity(self):
        g = self.decl.metric_tensor(self.M)
        Dg = covariant_derivative(g, self.c)
        self.add("Metricity", "nabla g", tensor_residual(Dg, zeros(Dg.components.shape), self.M.domain,
                                                         self.opts("Metricity")))

    # -- per-field checks --------------------------------------------------
    def pair(self, v: VectorField, want: set):
        M, c, gc, R, dom = self.M, self.c, self.gc, self.R, self.M.domain
        f = v.name
        frame = adapted_frame(v)
        H_closed = second_fundamental_closed_form(v, c, R)
        if "Eq7" in want:
            exact = frame.duality_exact()
            n = M.dim
            worst = ex.Residual(0.0, None)
            for name, P in frame.duality().items():
                ident = build_array((n, n), lambda h, j: ex.ONE if (h == j and name in ("B_inv.B", "C_inv.C")) else ex.ZERO)
                res = tensor_residual(P, ident, dom, self.opts("Eq7", f, name))
                if res.value > worst.value:
                    worst = res
            self.add("Eq7", "frame duality", worst, f, ok=exact and worst.value <= self.cfg.tol,
                     detail="exact" if exact else "not structurally exact")
        if "Eq8" in want:
            ind = induced_connection(v, c, check=False, frame=frame, gc=gc)
            self.add("Eq8", "induced = base", tensor_residual(ind, c, dom, self.opts("Eq8", f)), f)
        if "Eq9" in want or "Eq10" in want:
            H_frame, leftover = second_fundamental_from_frame(v, c, frame, gc)
        if "Eq9" in want:
            res = gauss_relation_residual(v, c, H_closed, self.opts("Eq9", f), frame, gc)
            res2 = tensor_residual(leftover, zeros(leftover.shape), dom, self.opts("Eq9", f, "B"))
            self.add("Eq9", "residual in C span", max(res, res2, key=lambda r: r.value), f)
        if "Eq10" in want:
            self.add("Eq10", "frame H = closed H", tensor_residual(H_frame, H_closed, dom, self.opts("Eq10", f)), f)
        if "Eq11" in want:
            self.add("Eq11", "H = LGamma - vR",
                     tensor_residual(H_closed, lie_plus_curvature(v, c, R), dom, self.opts("Eq11", f)), f)
        if "Eq12" in want:
            ind = induced_connection(v, c, check=False, frame=frame, gc=gc)
            lhs = section_derivative(v, c, frame, gc)
            self.add("Eq12", "Gauss split", tensor_residual(lhs, gauss_split(ind, H_closed, frame), dom,
                                                             self.opts("Eq12", f)), f)
        if "LieCommute" in want:
            lhs = antisymmetrized_derivative(lie_derivative_connection(v, c), c)
            self.add("LieCommute", "D LGamma = LR",
                     tensor_residual(lhs, lie_derivative_tensor(v, R), dom, self.opts("LieCommute", f)), f)
        if "Eq15" in want:
            tol = self.cfg.curvature_tol
            tan, ver = frame_curvature(v, c, frame, gc)
            closed = curvature_split_closed_form(v, c)
            o = self.opts("Eq15", f, tol=tol)
            self.add("Eq15", "tangential", tensor_residual(tan, closed.tangential, dom, o), f, tol=tol)
            self.add("Eq15", "vertical", tensor_residual(ver, closed.vertical, dom, o), f, tol=tol)
        if "Prop2" in want:
            vd = is_totally_geodesic(v, c, dom, self.opts("Prop2", f))
            self.add("Prop2", "totally geodesic", vd.h_residual, f, ok=vd.holds,
                     detail=f"H=0:{vd.h_zero} LGamma=0:{vd.lie_zero} vR=0:{vd.curvature_term_zero}")
        if "Prop3" in want:
            vd = is_curvature_tangent(v, c, dom, self.opts("Prop3", f))
            self.add("Prop3", "curvature tangent", vd.vertical_residual, f, ok=vd.holds,
                     detail=f"vertical=0:{vd.vertical_zero} LR=0:{vd.lie_zero} DvR=0:{vd.derivative_term_zero}")


def run_suite(ws: Workspace, cfg: SuiteConfig | None = None, manifolds=None, fields=None) -> VerificationReport:
    """Execute every selected check for every manifold and (manifold, field) pair."""
    cfg = cfg or SuiteConfig()
    report = VerificationReport(ws.name, cfg.seed)
    names = list(manifolds) if manifolds else list(ws.manifolds)
    with faults.inject(*cfg.faults):
        for name in names:
            decl = ws.manifolds[name]
            if fields:
                decl = _only_fields(decl, fields)
            _ManifoldRun(decl, cfg, report).run()
    aborted = {c.manifold for c in report.checks if c.anchor == "Setup"}
    expected = set(cfg.checks)
    if not any(ws.manifolds[n].metric is not None for n in names if n not in aborted):
        expected.discard("Metricity")
    if not any(ws.manifolds[n].fields for n in names if n not in aborted):
        expected -= set(PAIR_ANCHORS)
    present = {c.anchor for c in report.checks}
    missing = expected - present
    if missing and len(aborted) < len(names):
        raise SuiteError(f"checks silently absent from the report: {sorted(missing)}")
    report.checks.sort(key=CheckResult.sort_key)
    return report


def _only_fields(decl: ManifoldDecl, fields) -> ManifoldDecl:
    from dataclasses import replace
    from types import MappingProxyType

    unknown = [f for f in fields if f not in decl.fields]
    if unknown:
        raise KeyError(f"unknown field(s) on {decl.name}: {', '.join(unknown)}")
    return replace(decl, fields=MappingProxyType({f: decl.fields[f] for f in fields}))
