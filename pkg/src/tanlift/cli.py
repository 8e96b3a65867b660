"""Command-line front end.

Exit codes: 0 success (all checks pass), 1 check failures, 2 usage or input errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .base import CheckOptions, GeometryError, curvature, lie_derivative_connection
from .bundle import horizontal_lift_connection, horizontal_lift_metric
from .dsl import DSLError, Workspace, load_workspace
from .faults import FAULTS
from .section import (
    adapted_frame,
    curvature_decomposition,
    gauss_decomposition,
    induced_connection,
    second_fundamental,
)
from .verifier import ANCHORS, DESCRIPTIONS, SuiteConfig, SuiteError, run_suite

SELECTORS = ("christoffel", "curvature", "lie-connection", "lift-connection", "lift-metric",
             "frame", "induced", "H", "gauss", "curvature-split")
FIELD_SELECTORS = {"lie-connection", "frame", "induced", "H", "gauss", "curvature-split"}


class UsageError(Exception):
    pass


def render(arr) -> list | str:
    """Nested lists of simplified expression strings."""
    if hasattr(arr, "components"):
        arr = arr.components
    arr = np.asarray(arr, dtype=object)
    if arr.ndim == 0:
        return ex.to_string(ex.simplify(arr[()]))
    return [render(a) for a in arr]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tanlift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("workspace", help="workspace file")
        sp.add_argument("--manifold", action="append", help="restrict to manifold (repeatable)")
        sp.add_argument("--field", action="append", help="restrict to vector field (repeatable)")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--points", type=int, default=20)
        sp.add_argument("--tol", type=float, default=1e-9)

    for name in ("check", "explain"):
        sp = sub.add_parser(name, help="run the verification suite" if name == "check"
                            else "run the suite and describe what each check asserts")
        common(sp)
        sp.add_argument("--checks", help="comma-separated anchors, default all")
        sp.add_argument("--fibre-halfwidth", type=float, default=2.0)
        sp.add_argument("--inject-fault", action="append", default=[], choices=sorted(FAULTS),
                        help="flip the sign of one formula term (mutation testing)")
    sp = sub.add_parser("compute", help="print a computed object")
    sp.add_argument("selector", choices=SELECTORS)
    common(sp)
    return p


def _load(path: str) -> Workspace:
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    return load_workspace(path)


def _suite(args) -> int:
    ws = _load(args.workspace)
    checks = tuple(a.strip() for a in args.checks.split(",")) if args.checks else ANCHORS
    try:
        cfg = SuiteConfig(seed=args.seed, points=args.points, tol=args.tol, checks=checks,
                          fibre_halfwidth=args.fibre_halfwidth, faults=tuple(args.inject_fault))
    except ValueError as err:
        raise UsageError(str(err)) from None
    for m in args.manifold or ():
        if m not in ws.manifolds:
            raise UsageError(f"unknown manifold {m!r}")
    try:
        report = run_suite(ws, cfg, manifolds=args.manifold, fields=args.field)
    except KeyError as err:
        raise UsageError(str(err.args[0])) from None
    if args.format == "json":
        print(report.to_json())
    elif args.command == "explain":
        for c in report.checks:
            where = c.manifold + (f"/{c.field}" if c.field else "")
            print(f"[{c.anchor}] {where} {c.name}")
            print(f"    asserts:  {DESCRIPTIONS.get(c.anchor, '')}")
            print(f"    residual: {c.max_residual:.3e}  -> {c.status}" + (f"  ({c.detail})" if c.detail else ""))
        s = report.summary()
        print(f"{s['passed']}/{s['total']} checks passed")
    else:
        print(report.to_text())
    return 0 if report.passed else 1


def compute_object(decl, sel: str, field_name: str | None = None, opts: CheckOptions | None = None):
    """The raw object behind a selector: a component array or a dict of them."""
    opts = opts or CheckOptions()
    M = decl.manifold()
    c = decl.connection_object(M, opts)
    v = decl.field(field_name, M) if sel in FIELD_SELECTORS else None
    if sel == "christoffel":
        return c.components
    if sel == "curvature":
        return curvature(c).components
    if sel == "lie-connection":
        return lie_derivative_connection(v, c).components
    if sel == "lift-connection":
        return horizontal_lift_connection(c).components
    if sel == "lift-metric":
        g = decl.metric_tensor(M)
        if g is None:
            raise UsageError(f"manifold {decl.name!r} has no metric")
        return horizontal_lift_metric(g, c).components
    if sel == "frame":
        fr = adapted_frame(v)
        return {"B": fr.B, "C": fr.C, "B_inv": fr.B_inv, "C_inv": fr.C_inv}
    if sel == "induced":
        return induced_connection(v, c, opts=opts).components
    if sel == "H":
        return second_fundamental(v, c, opts=opts).components
    if sel == "gauss":
        gd = gauss_decomposition(v, c, opts=opts)
        return {"tangential": gd.tangential.components, "normal": gd.normal.components}
    if sel == "curvature-split":
        cd = curvature_decomposition(v, c, opts=opts)
        return {"tangential": cd.tangential.components, "vertical": cd.vertical.components}
    raise UsageError(f"unknown selector {sel!r}")


def render_object(obj):
    if isinstance(obj, dict):
        return {k: render(a) for k, a in obj.items()}
    return render(obj)


def _compute(args) -> int:
    ws = _load(args.workspace)
    if args.manifold:
        if len(args.manifold) > 1:
            raise UsageError("compute takes a single --manifold")
        mname = args.manifold[0]
    elif len(ws.manifolds) == 1:
        mname = next(iter(ws.manifolds))
    else:
        raise UsageError("workspace has several manifolds; pass --manifold")
    if mname not in ws.manifolds:
        raise UsageError(f"unknown manifold {mname!r}")
    decl = ws.manifolds[mname]
    sel = args.selector
    fname = None
    if sel in FIELD_SELECTORS:
        if not args.field or len(args.field) != 1:
            raise UsageError(f"selector {sel!r} needs exactly one --field")
        fname = args.field[0]
        if fname not in decl.fields:
            raise UsageError(f"unknown field {fname!r} on {mname!r}")
    obj = render_object(compute_object(decl, sel, fname, CheckOptions(args.points, args.tol, args.seed)))

    if args.format == "json":
        out = {"workspace": ws.name, "seed": args.seed, "manifold": mname,
               "field": fname, "checks": [], "objects": {sel: obj}}
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        _print_text(sel, obj)
    return 0


def _print_text(label: str, obj) -> None:
    if isinstance(obj, dict):
        for k, val in obj.items():
            _print_text(f"{label}.{k}", val)
        return
    lines = []

    def walk(o, idx):
        if isinstance(o, list):
            for i, x in enumerate(o):
                walk(x, idx + (i,))
        elif o != "0":
            lines.append(f"{label}{''.join(f'[{i}]' for i in idx)} = {o}")

    walk(obj, ())
    print("\n".join(lines) if lines else f"{label}: all components zero")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "compute":
            return _compute(args)
        return _suite(args)
    except UsageError as err:
        print(f"tanlift: error: {err}", file=sys.stderr)
        return 2
    except DSLError as err:
        print(f"tanlift: {args.workspace}: {err}", file=sys.stderr)
        return 2
    except (GeometryError, ex.ExprError, SuiteError) as err:
        print(f"tanlift: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
