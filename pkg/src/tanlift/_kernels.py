"""Batch evaluation of expression DAGs over many sample points.

An expression list is flattened into a register program: one instruction per
unique node, operands referring to earlier registers.  The program runs over
a ``(n_vars, n_points)`` array and returns ``(n_roots, n_points)`` values,
with NaN wherever a point falls outside an elementary function's domain.

Two interchangeable kernels exist.  The numba one is used when numba imports
and ``TANLIFT_BACKEND`` is not ``numpy``; the numpy one loops over
instructions and vectorises over points.
"""
from __future__ import annotations

import os

import numpy as np

from .expr import Expr, postorder

OPS = {
    "const": 0, "var": 1, "neg": 2, "sin": 3, "cos": 4, "tan": 5, "exp": 6,
    "log": 7, "sqrt": 8, "add": 9, "sub": 10, "mul": 11, "div": 12,
    "powc": 13, "pow": 14,
}

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def default_backend() -> str:
    flag = os.environ.get("TANLIFT_BACKEND", "").strip().lower()
    if flag == "numpy" or numba is None:
        return "numpy"
    return "numba"


class Program:
    __slots__ = ("ops", "a", "b", "consts", "roots", "n_vars")

    def __init__(self, ops, a, b, consts, roots, n_vars):
        self.ops = ops
        self.a = a
        self.b = b
        self.consts = consts
        self.roots = roots
        self.n_vars = n_vars

    def __len__(self):
        return len(self.ops)

    def run(self, x: np.ndarray, backend: str | None = None) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n_vars:
            raise ValueError(f"expected array of shape ({self.n_vars}, k), got {x.shape}")
        backend = backend or default_backend()
        if backend == "numba":
            regs = _run_numba(self.ops, self.a, self.b, self.consts, x)
        elif backend == "numpy":
            regs = _run_numpy(self.ops, self.a, self.b, self.consts, x)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        return regs[self.roots]


def compile_program(roots: list[Expr], names: list[str]) -> Program:
    index = {n: i for i, n in enumerate(names)}
    nodes = postorder(roots)
    reg = {id(n): i for i, n in enumerate(nodes)}
    m = len(nodes)
    ops = np.empty(m, dtype=np.int64)
    a = np.zeros(m, dtype=np.int64)
    b = np.zeros(m, dtype=np.int64)
    consts = np.zeros(m, dtype=np.float64)
    for i, n in enumerate(nodes):
        op = n.op
        if op == "const":
            consts[i] = n.value
        elif op == "var":
            a[i] = index[n.name]
        else:
            a[i] = reg[id(n.args[0])]
            if len(n.args) == 2:
                b[i] = reg[id(n.args[1])]
                if op == "pow" and n.args[1].is_const:
                    op = "powc"
        ops[i] = OPS[op]
    roots_idx = np.array([reg[id(r)] for r in roots], dtype=np.int64)
    return Program(ops, a, b, consts, roots_idx, len(names))


def _run_numpy(ops, a, b, consts, x):
    m, k = len(ops), x.shape[1]
    regs = np.empty((m, k))
    with np.errstate(all="ignore"):
        for i in range(m):
            op = ops[i]
            if op == 0:
                regs[i] = consts[i]
                continue
            if op == 1:
                regs[i] = x[a[i]]
                continue
            u = regs[a[i]]
            if op == 2:
                regs[i] = -u
            elif op == 3:
                regs[i] = np.sin(u)
            elif op == 4:
                regs[i] = np.cos(u)
            elif op == 5:
                regs[i] = np.tan(u)
            elif op == 6:
                regs[i] = np.exp(u)
            elif op == 7:
                regs[i] = np.where(u > 0, np.log(np.where(u > 0, u, 1.0)), np.nan)
            elif op == 8:
                regs[i] = np.where(u >= 0, np.sqrt(np.abs(u)), np.nan)
            else:
                w = regs[b[i]]
                if op == 9:
                    regs[i] = u + w
                elif op == 10:
                    regs[i] = u - w
                elif op == 11:
                    regs[i] = u * w
                elif op == 12:
                    regs[i] = np.where(w != 0, u / np.where(w != 0, w, 1.0), np.nan)
                elif op == 13:
                    regs[i] = _powc_numpy(u, w)
                else:
                    regs[i] = np.where(u > 0, np.power(np.where(u > 0, u, 1.0), w), np.nan)
    regs[~np.isfinite(regs)] = np.nan
    return regs


def _powc_numpy(u, w):
    e = w[0] if w.size else 0.0
    if float(e).is_integer():
        ok = ~((u == 0) & (e < 0))
        base = np.where(ok, u, 1.0)
    else:
        ok = (u > 0) | ((u == 0) & (e > 0))
        base = np.where(ok, np.abs(u), 1.0)
    return np.where(ok, np.power(base, e), np.nan)


if numba is not None:

    @numba.njit(cache=True)
    def _powc_scalar(u, e):
        if e == np.floor(e):
            if u == 0.0 and e < 0:
                return np.nan
            return u ** e
        if u < 0.0 or (u == 0.0 and e <= 0):
            return np.nan
        return u ** e

    @numba.njit(cache=True)
    def _run_numba(ops, a, b, consts, x):
        # dispatch once per instruction, then a tight loop over points
        m = ops.shape[0]
        k = x.shape[1]
        regs = np.empty((m, k))
        for i in range(m):
            op = ops[i]
            out = regs[i]
            if op == 0:
                out[:] = consts[i]
                continue
            if op == 1:
                out[:] = x[a[i]]
                continue
            u = regs[a[i]]
            w = regs[b[i]]
            if op == 2:
                for p in range(k):
                    out[p] = -u[p]
            elif op == 3:
                for p in range(k):
                    out[p] = np.sin(u[p])
            elif op == 4:
                for p in range(k):
                    out[p] = np.cos(u[p])
            elif op == 5:
                for p in range(k):
                    out[p] = np.tan(u[p])
            elif op == 6:
                for p in range(k):
                    out[p] = np.exp(u[p])
            elif op == 7:
                for p in range(k):
                    out[p] = np.log(u[p]) if u[p] > 0 else np.nan
            elif op == 8:
                for p in range(k):
                    out[p] = np.sqrt(u[p]) if u[p] >= 0 else np.nan
            elif op == 9:
                for p in range(k):
                    out[p] = u[p] + w[p]
            elif op == 10:
                for p in range(k):
                    out[p] = u[p] - w[p]
            elif op == 11:
                for p in range(k):
                    out[p] = u[p] * w[p]
            elif op == 12:
                for p in range(k):
                    out[p] = u[p] / w[p] if w[p] != 0 else np.nan
            elif op == 13:
                for p in range(k):
                    out[p] = _powc_scalar(u[p], w[p])
            else:
                for p in range(k):
                    out[p] = u[p] ** w[p] if u[p] > 0 else np.nan
            for p in range(k):
                if not np.isfinite(out[p]):
                    out[p] = np.nan
        return regs

else:  # pragma: no cover
    _run_numba = _run_numpy
