"""Workspace files: manifolds, metrics or connections, sampling domains and
vector fields in a small block-structured language.

::

    # unit sphere
    manifold sphere {
      dim 2;
      coords theta, phi;
      metric { g[0][0] = 1; g[1][1] = sin(theta)^2; }
      domain { theta in (0.3, 2.8); phi in (0.1, 6.1); }
    }
    vectorfield rot on sphere { v[1] = 1; }

Component indices are zero-based.  ``connection [symmetric] { Gamma[k][j][i] = ...; }``
replaces the metric block for an explicit connection.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import expr as ex
from .base import (
    CheckOptions,
    Connection,
    DOWN,
    Manifold,
    Tensor,
    VectorField,
    christoffel_from_metric,
    tensor_residual,
)
from .expr import Expr

KEYWORDS = {"manifold", "vectorfield", "on", "dim", "coords", "metric", "connection",
            "symmetric", "domain", "in"}
MAX_DIM = 8
MAX_DEPTH = 100


class DSLError(ValueError):
    """Base for positioned errors.  ``pos`` is a 0-based character offset."""

    def __init__(self, message: str, pos: int = 0, line: int = 1, col: int = 1):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.pos = pos
        self.line = line
        self.col = col


class ParseError(DSLError):
    pass


class WorkspaceError(DSLError):
    """Semantic validation failure; ``kind`` names the violated rule."""

    def __init__(self, kind: str, message: str, pos: int = 0, line: int = 1, col: int = 1):
        super().__init__(message, pos, line, col)
        self.kind = kind


# ---------------------------------------------------------------------------
# lexer

@dataclass(frozen=True)
class Token:
    kind: str  # "num", "ident", "op", "eof"
    text: str
    pos: int
    line: int
    col: int


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<comment>#[^\n]*)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(){}\[\],;=])"
)


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), pos, line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", pos, line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.depth = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.pos, t.line, t.col)

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident":
            raise self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        return self.advance()

    def integer(self) -> int:
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            raise self.error(f"expected non-negative integer, found {t.text or 'end of input'!r}")
        self.advance()
        return int(t.text)

    # expressions: sum > product > unary minus > power (right-assoc) > atom
    def expression(self) -> Expr:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.error("expression nested too deeply")
        try:
            e = self.term()
            while self.at("+") or self.at("-"):
                op = "add" if self.advance().text == "+" else "sub"
                e = ex.node(op, e, self.term())
            return e
        finally:
            self.depth -= 1

    def term(self) -> Expr:
        e = self.unary()
        while self.at("*") or self.at("/"):
            op = "mul" if self.advance().text == "*" else "div"
            e = ex.node(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.at("-"):
            self.advance()
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise self.error("expression nested too deeply")
            try:
                return ex.node("neg", self.unary())
            finally:
                self.depth -= 1
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            self.advance()
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise self.error("expression nested too deeply")
            try:
                return ex.node("pow", base, self.unary())
            finally:
                self.depth -= 1
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            v = float(t.text)
            if not math.isfinite(v):
                raise self.error(f"number {t.text!r} out of range", t)
            return ex.const(v)
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                if t.text not in ex.FUNCTIONS:
                    raise self.error(f"unknown function {t.text!r}", t)
                self.advance()
                arg = self.expression()
                self.expect(")")
                return ex.node(t.text, arg)
            if t.text in ex.FUNCTIONS:
                raise self.error(f"function {t.text!r} needs an argument")
            return ex.var(t.text)
        if self.at("("):
            self.advance()
            e = self.expression()
            self.expect(")")
            return e
        raise self.error(f"expected expression, found {t.text or 'end of input'!r}")


def parse_expression(text: str) -> Expr:
    """Parse an infix expression into a raw (unsimplified) Expr tree."""
    p = _Parser(text)
    e = p.expression()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after expression")
    return e


# ---------------------------------------------------------------------------
# workspace

@dataclass(frozen=True, eq=False)
class ManifoldDecl:
    name: str
    coords: tuple[str, ...]
    domain: Mapping[str, tuple[float, float]]
    metric: np.ndarray | None = None  # n x n
    connection: np.ndarray | None = None  # n x n x n, [k, j, i]
    symmetric: bool = False
    fields: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def source(self) -> str:
        return "metric" if self.metric is not None else "connection"

    def manifold(self) -> Manifold:
        return Manifold(self.name, self.coords, self.domain)

    def metric_tensor(self, M: Manifold | None = None) -> Tensor | None:
        if self.metric is None:
            return None
        return Tensor(M or self.manifold(), (DOWN, DOWN), self.metric)

    def connection_object(self, M: Manifold | None = None, opts: CheckOptions | None = None) -> Connection:
        M = M or self.manifold()
        if self.metric is not None:
            return christoffel_from_metric(self.metric_tensor(M), opts=opts or CheckOptions())
        return Connection(M, self.connection, symmetric=self.symmetric)

    def field(self, name: str, M: Manifold | None = None) -> VectorField:
        return VectorField(M or self.manifold(), self.fields[name], name)


@dataclass(frozen=True, eq=False)
class Workspace:
    manifolds: Mapping[str, ManifoldDecl]
    name: str = "workspace"

    def __getitem__(self, name: str) -> ManifoldDecl:
        return self.manifolds[name]


@dataclass
class _Assign:
    indices: tuple[int, ...]
    value: Expr
    tok: Token


@dataclass
class _MBlock:
    name: str
    tok: Token
    dim: int | None = None
    dim_tok: Token | None = None
    coords: list[Token] | None = None
    metric: list[_Assign] | None = None
    metric_tok: Token | None = None
    connection: list[_Assign] | None = None
    connection_tok: Token | None = None
    symmetric: bool = False
    domain: list[tuple[Token, float, float]] | None = None


@dataclass
class _FBlock:
    name: str
    tok: Token
    manifold: Token
    comps: list[_Assign]


def _werr(kind: str, msg: str, tok: Token) -> WorkspaceError:
    return WorkspaceError(kind, msg, tok.pos, tok.line, tok.col)


class _WorkspaceParser(_Parser):
    def workspace(self):
        manifolds: list[_MBlock] = []
        fields: list[_FBlock] = []
        while self.tok.kind != "eof":
            if self.at("manifold"):
                manifolds.append(self.manifold())
            elif self.at("vectorfield"):
                fields.append(self.vectorfield())
            else:
                raise self.error(f"expected 'manifold' or 'vectorfield', found {self.tok.text!r}")
        return manifolds, fields

    def manifold(self) -> _MBlock:
        self.expect("manifold")
        name = self.ident("manifold name")
        if name.text in KEYWORDS:
            raise self.error(f"{name.text!r} is a keyword", name)
        blk = _MBlock(name.text, name)
        self.expect("{")
        while not self.at("}"):
            t = self.tok
            if self.at("dim"):
                self.advance()
                if blk.dim is not None:
                    raise _werr("duplicate", "dim given twice", t)
                blk.dim, blk.dim_tok = self.integer(), t
                self.expect(";")
            elif self.at("coords"):
                self.advance()
                if blk.coords is not None:
                    raise _werr("duplicate", "coords given twice", t)
                blk.coords = [self.ident("coordinate name")]
                while self.at(","):
                    self.advance()
                    blk.coords.append(self.ident("coordinate name"))
                self.expect(";")
            elif self.at("metric"):
                self.advance()
                if blk.metric is not None:
                    raise _werr("duplicate", "metric given twice", t)
                blk.metric, blk.metric_tok = self.assignments("g", 2), t
            elif self.at("connection"):
                self.advance()
                if blk.connection is not None:
                    raise _werr("duplicate", "connection given twice", t)
                if self.at("symmetric"):
                    self.advance()
                    blk.symmetric = True
                blk.connection, blk.connection_tok = self.assignments("Gamma", 3), t
            elif self.at("domain"):
                self.advance()
                if blk.domain is not None:
                    raise _werr("duplicate", "domain given twice", t)
                blk.domain = self.domain()
            else:
                raise self.error(f"unexpected {t.text or 'end of input'!r} in manifold block")
        self.expect("}")
        return blk

    def assignments(self, symbol: str, rank: int) -> list[_Assign]:
        self.expect("{")
        out = []
        while not self.at("}"):
            t = self.tok
            name = self.ident(f"{symbol}[...]")
            if name.text != symbol:
                raise self.error(f"expected {symbol!r}, found {name.text!r}", name)
            idx = []
            for _ in range(rank):
                self.expect("[")
                idx.append(self.integer())
                self.expect("]")
            if self.at("["):
                raise _werr("dimension", f"{symbol} takes exactly {rank} indices", t)
            self.expect("=")
            value = self.expression()
            self.expect(";")
            out.append(_Assign(tuple(idx), value, t))
        self.expect("}")
        return out

    def domain(self) -> list[tuple[Token, float, float]]:
        self.expect("{")
        out = []
        while not self.at("}"):
            name = self.ident("coordinate name")
            self.expect("in")
            self.expect("(")
            lo = self.bound()
            self.expect(",")
            hi = self.bound()
            self.expect(")")
            self.expect(";")
            out.append((name, lo, hi))
        self.expect("}")
        return out

    def bound(self) -> float:
        t = self.tok
        e = self.expression()
        if ex.free_vars(e):
            raise self.error("domain bound must be a constant", t)
        try:
            v = ex.evaluate(e, {})
        except ex.ExprError as err:
            raise self.error(f"bad domain bound: {err}", t) from None
        if not math.isfinite(v):
            raise self.error("domain bound must be finite", t)
        return v

    def vectorfield(self) -> _FBlock:
        self.expect("vectorfield")
        name = self.ident("field name")
        self.expect("on")
        man = self.ident("manifold name")
        comps = self.assignments("v", 1)
        return _FBlock(name.text, name, man, comps)


def _fill(assigns: list[_Assign], n: int, rank: int, coords: set, symmetric_pair, what: str,
          domain, opts: CheckOptions) -> np.ndarray:
    arr = np.empty((n,) * rank, dtype=object)
    arr.fill(ex.ZERO)
    given: dict[tuple, _Assign] = {}
    for a in assigns:
        if any(i >= n for i in a.indices):
            raise _werr("dimension", f"{what} index {list(a.indices)} out of range for dimension {n}", a.tok)
        unknown = ex.free_vars(a.value) - coords
        if unknown:
            raise _werr("unknown-coordinate", f"unknown coordinate {sorted(unknown)[0]!r} in {what}", a.tok)
        if a.indices in given:
            raise _werr("duplicate", f"{what}{list(a.indices)} defined twice", a.tok)
        given[a.indices] = a
        arr[a.indices] = a.value
    if symmetric_pair is not None:
        for idx, a in given.items():
            twin = symmetric_pair(idx)
            if twin == idx:
                continue
            if twin not in given:
                arr[twin] = a.value
            else:
                res = ex.residual([a.value], [given[twin].value], domain, opts.points, opts.seed)
                if res.value > opts.tol:
                    raise _werr("asymmetric", f"{what}{list(idx)} and {what}{list(twin)} disagree", a.tok)
    arr.flags.writeable = False
    return arr


def parse_workspace(text: str, name: str = "workspace", opts: CheckOptions | None = None) -> Workspace:
    """Parse and validate a workspace file."""
    opts = opts or CheckOptions()
    p = _WorkspaceParser(text)
    mblocks, fblocks = p.workspace()

    decls: dict[str, dict] = {}
    for b in mblocks:
        if b.name in decls:
            raise _werr("duplicate", f"manifold {b.name!r} defined twice", b.tok)
        if b.coords is None:
            raise _werr("missing", f"manifold {b.name!r} has no coords", b.tok)
        coords = [t.text for t in b.coords]
        for t in b.coords:
            if t.text in KEYWORDS or t.text in ex.FUNCTIONS:
                raise _werr("reserved", f"{t.text!r} cannot be a coordinate name", t)
            if coords.count(t.text) > 1:
                raise _werr("duplicate", f"coordinate {t.text!r} repeated", t)
        if b.dim is None:
            raise _werr("missing", f"manifold {b.name!r} has no dim", b.tok)
        if b.dim != len(coords) or b.dim == 0:
            raise _werr("dimension", f"dim {b.dim} but {len(coords)} coordinates", b.dim_tok)
        if b.dim > MAX_DIM:
            raise _werr("dimension", f"dim {b.dim} exceeds supported maximum {MAX_DIM}", b.dim_tok)
        if b.metric is not None and b.connection is not None:
            raise _werr("conflict", f"manifold {b.name!r} has both a metric and a connection", b.connection_tok)
        if b.metric is None and b.connection is None:
            raise _werr("missing", f"manifold {b.name!r} needs a metric or a connection", b.tok)
        if b.domain is None:
            raise _werr("missing-domain", f"manifold {b.name!r} has no sampling domain", b.tok)
        dom: dict[str, tuple[float, float]] = {}
        for t, lo, hi in b.domain:
            if t.text not in coords:
                raise _werr("unknown-coordinate", f"unknown coordinate {t.text!r} in domain", t)
            if t.text in dom:
                raise _werr("duplicate", f"domain for {t.text!r} given twice", t)
            if not lo < hi:
                raise _werr("domain", f"empty interval ({lo}, {hi}) for {t.text!r}", t)
            dom[t.text] = (lo, hi)
        for c in coords:
            if c not in dom:
                raise _werr("missing-domain", f"no sampling interval for coordinate {c!r}", b.tok)
        dom = {c: dom[c] for c in coords}
        n, cset = b.dim, set(coords)
        metric = connection = None
        if b.metric is not None:
            metric = _fill(b.metric, n, 2, cset, lambda ij: (ij[1], ij[0]), "g", dom, opts)
        else:
            pair = (lambda kji: (kji[0], kji[2], kji[1])) if b.symmetric else None
            connection = _fill(b.connection, n, 3, cset, pair, "Gamma", dom, opts)
        decls[b.name] = dict(name=b.name, coords=tuple(coords), domain=MappingProxyType(dom),
                             metric=metric, connection=connection, symmetric=b.symmetric, fields={})

    for f in fblocks:
        target = decls.get(f.manifold.text)
        if target is None:
            raise _werr("unknown-manifold", f"unknown manifold {f.manifold.text!r}", f.manifold)
        if f.name in target["fields"]:
            raise _werr("duplicate", f"vector field {f.name!r} defined twice on {f.manifold.text!r}", f.tok)
        n = len(target["coords"])
        target["fields"][f.name] = _fill(f.comps, n, 1, set(target["coords"]), None, "v",
                                         target["domain"], opts)

    manifolds = {}
    for k, d in decls.items():
        d["fields"] = MappingProxyType(d["fields"])
        manifolds[k] = ManifoldDecl(**d)
    return Workspace(MappingProxyType(manifolds), name)


def load_workspace(path, opts: CheckOptions | None = None) -> Workspace:
    from pathlib import Path

    path = Path(path)
    return parse_workspace(path.read_text(encoding="utf-8"), name=path.stem, opts=opts)


# ---------------------------------------------------------------------------
# serializer

def _fmt_bound(v: float) -> str:
    return repr(float(v))


def serialize_workspace(ws: Workspace) -> str:
    """Canonical text form; parses back to an equivalent workspace."""
    lines: list[str] = []
    for m in ws.manifolds.values():
        lines.append(f"manifold {m.name} {{")
        lines.append(f"  dim {m.dim};")
        lines.append(f"  coords {', '.join(m.coords)};")
        n = m.dim
        if m.metric is not None:
            lines.append("  metric {")
            for i in range(n):
                for j in range(i, n):
                    if not m.metric[i, j].is_zero:
                        lines.append(f"    g[{i}][{j}] = {ex.to_string(m.metric[i, j])};")
            lines.append("  }")
        else:
            lines.append("  connection symmetric {" if m.symmetric else "  connection {")
            for k, j, i in np.ndindex(n, n, n):
                if m.symmetric and j > i:
                    continue
                if not m.connection[k, j, i].is_zero:
                    lines.append(f"    Gamma[{k}][{j}][{i}] = {ex.to_string(m.connection[k, j, i])};")
            lines.append("  }")
        lines.append("  domain {")
        for c, (lo, hi) in m.domain.items():
            lines.append(f"    {c} in ({_fmt_bound(lo)}, {_fmt_bound(hi)});")
        lines.append("  }")
        lines.append("}")
    for m in ws.manifolds.values():
        for fname, comps in m.fields.items():
            lines.append(f"vectorfield {fname} on {m.name} {{")
            for h, e in enumerate(comps):
                if not e.is_zero:
                    lines.append(f"  v[{h}] = {ex.to_string(e)};")
            lines.append("}")
    return "\n".join(lines) + "\n"
