"""Shared generators and independent numeric oracles for the test suite."""
from __future__ import annotations

import random
from pathlib import Path

import numpy as np
from hypothesis import strategies as st

from tanlift import expr as ex
from tanlift.dsl import load_workspace

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
ACCEPTANCE_FILES = ("flat", "flat3", "polar", "sphere", "hyperbolic", "explicit")

X, Y = ex.var("x"), ex.var("y")
BOX = {"x": (-1.0, 1.0), "y": (-1.0, 1.0)}


def workspace(stem: str):
    return load_workspace(CORPUS / f"{stem}.lg")


def setup(stem: str, manifold: str | None = None):
    """(decl, manifold, connection) for a corpus file."""
    ws = workspace(stem)
    decl = ws.manifolds[manifold or next(iter(ws.manifolds))]
    M = decl.manifold()
    return decl, M, decl.connection_object(M)


def corpus_pairs():
    """Every (file, manifold, field) triple of the acceptance corpus."""
    for stem in ACCEPTANCE_FILES:
        ws = workspace(stem)
        for mname, decl in ws.manifolds.items():
            for f in decl.fields:
                yield stem, mname, f


# -- random expressions that are defined everywhere on BOX --------------------

def _safe(draw_op, a, b, raw: bool):
    mk = (lambda op, *xs: ex.node(op, *xs)) if raw else (lambda op, *xs: ex.rebuild(op, xs))
    one = ex.const(1.0)
    if draw_op == "add":
        return mk("add", a, b)
    if draw_op == "sub":
        return mk("sub", a, b)
    if draw_op == "mul":
        return mk("mul", a, b)
    if draw_op == "div":
        return mk("div", a, mk("add", one, mk("pow", b, ex.const(2.0))))
    if draw_op == "neg":
        return mk("neg", a)
    if draw_op == "pow":
        return mk("pow", a, ex.const(2.0))
    if draw_op in ("sin", "cos"):
        return mk(draw_op, a)
    if draw_op == "exp":
        return mk("exp", mk("sin", a))
    if draw_op == "log":
        return mk("log", mk("add", one, mk("pow", a, ex.const(2.0))))
    if draw_op == "sqrt":
        return mk("sqrt", mk("add", ex.const(2.0), mk("cos", a)))
    raise AssertionError(draw_op)


OPS = ("add", "sub", "mul", "div", "neg", "pow", "sin", "cos", "exp", "log", "sqrt")


def random_expr(rng: random.Random, depth: int = 4, raw: bool = False) -> ex.Expr:
    """Random expression in x, y.  With raw=True no simplification is applied."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.4:
            return X
        if r < 0.7:
            return Y
        return ex.const(rng.choice([0.0, 1.0, 2.0, -1.0, 0.5, rng.uniform(-3, 3)]))
    op = rng.choice(OPS)
    return _safe(op, random_expr(rng, depth - 1, raw), random_expr(rng, depth - 1, raw), raw)


@st.composite
def expressions(draw, max_depth: int = 4, raw: bool = False):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_expr(random.Random(seed), max_depth, raw)


# -- oracles ------------------------------------------------------------------

def central_difference(e: ex.Expr, v: str, p: dict, h: float = 1e-5) -> float:
    a, b = dict(p), dict(p)
    a[v] += h
    b[v] -= h
    return (ex.evaluate(e, a) - ex.evaluate(e, b)) / (2 * h)


def fd_christoffel(metric, coords, p, h: float = 1e-5) -> np.ndarray:
    """Levi-Civita symbols from a numeric metric callable, by finite differences.

    metric(point_dict) -> (n, n) array.  Returns G[k, j, i] = Gamma^k_{ji}.
    """
    n = len(coords)
    dg = np.empty((n, n, n))  # dg[l, a, b] = d_l g_ab
    for l, c in enumerate(coords):
        a, b = dict(p), dict(p)
        a[c] += h
        b[c] -= h
        dg[l] = (metric(a) - metric(b)) / (2 * h)
    ginv = np.linalg.inv(metric(p))
    G = np.empty((n, n, n))
    for k in range(n):
        for j in range(n):
            for i in range(n):
                G[k, j, i] = 0.5 * sum(ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[l, j, i]) for l in range(n))
    return G


def numeric(arr, p) -> np.ndarray:
    arr = np.asarray(getattr(arr, "components", arr), dtype=object)
    return np.vectorize(lambda e: ex.evaluate(e, p), otypes=[float])(arr)


# -- acceptance log, printed by the terminal-summary hook in conftest.py -------

ACCEPTANCE_LOG: dict[str, tuple[bool, str]] = {}


def record(ac: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LOG[ac] = (bool(ok), detail)
