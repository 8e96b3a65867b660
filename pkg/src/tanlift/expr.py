"""Immutable symbolic scalar expressions over named coordinates.

Nodes are hash-consed: two structurally identical expressions built through
the smart constructors are the same object, so ``a is b`` is structural
equality and derivative caches are shared across the whole DAG.

Arithmetic operators on :class:`Expr` apply light simplification (identity
elements, constant folding, ``x - x -> 0``, like-term merging).  Use
:func:`node` to build a raw, unsimplified node.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

UNARY_OPS = ("neg", "sin", "cos", "tan", "exp", "log", "sqrt")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

RETRY_BOUND = 50


class ExprError(ValueError):
    pass


class DomainError(ExprError):
    """Evaluation left the domain of an elementary function."""

    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message} in subexpression {to_string(subexpr)}")
        self.subexpr = subexpr


class MissingVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"no value for variable {name!r}")
        self.name = name


class UnsampleableError(ExprError):
    """No valid sample point found within the retry bound."""


class Expr:
    __slots__ = ("op", "args", "value", "name", "_dcache", "__weakref__")

    op: str
    args: tuple["Expr", ...]
    value: float
    name: str

    def __setattr__(self, key, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        if self.op == "const":
            return (const, (self.value,))
        if self.op == "var":
            return (var, (self.name,))
        return (node, (self.op, *self.args))

    # arithmetic goes through the simplifying constructors
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pos__(self):
        return self

    def __repr__(self):
        return f"Expr({to_string(self)})"

    def __str__(self):
        return to_string(self)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_value(self, v: float) -> bool:
        return self.op == "const" and self.value == v

    @property
    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0.0


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _intern(key: tuple, op: str, args: tuple, value: float = 0.0, name: str = "") -> Expr:
    e = _table.get(key)
    if e is not None:
        return e
    e = object.__new__(Expr)
    object.__setattr__(e, "op", op)
    object.__setattr__(e, "args", args)
    object.__setattr__(e, "value", value)
    object.__setattr__(e, "name", name)
    object.__setattr__(e, "_dcache", {})
    return _table.setdefault(key, e)


def const(value: float) -> Expr:
    v = float(value)
    if not math.isfinite(v):
        raise ExprError(f"non-finite constant {value!r}")
    if v == 0.0:
        v = 0.0  # fold -0.0
    return _intern(("const", v), "const", (), value=v)


def var(name: str) -> Expr:
    return _intern(("var", name), "var", (), name=name)


def node(op: str, *args: Expr) -> Expr:
    """Raw constructor: no simplification is applied."""
    if op in UNARY_OPS:
        if len(args) != 1:
            raise ExprError(f"{op} takes one argument")
    elif op in BINARY_OPS:
        if len(args) != 2:
            raise ExprError(f"{op} takes two arguments")
    else:
        raise ExprError(f"unknown operator {op!r}")
    return _intern((op, *map(id, args)), op, tuple(args))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


ZERO = const(0)
ONE = const(1)
TWO = const(2)


# ---------------------------------------------------------------------------
# simplifying constructors

def _coeff(e: Expr) -> tuple[float, Expr]:
    """Split e into (numeric coefficient, remaining factor)."""
    if e.op == "mul" and e.args[0].is_const:
        return e.args[0].value, e.args[1]
    if e.op == "neg":
        c, t = _coeff(e.args[0])
        return -c, t
    return 1.0, e


def _scaled(c: float, t: Expr) -> Expr:
    if c == 0.0:
        return ZERO
    if c == 1.0:
        return t
    if c == -1.0:
        return neg(t)
    return node("mul", const(c), t)


def _is_sum(e: Expr) -> bool:
    return e.op in ("add", "sub")


def _combine(parts: list[tuple[Expr, float]]) -> Expr:
    """Flatten nested sums into sum_i c_i t_i, merge like terms, rebuild."""
    acc: dict[int, list] = {}
    constant = 0.0
    stack = list(parts)
    while stack:
        e, c = stack.pop()
        op = e.op
        if op == "add":
            stack.append((e.args[1], c))
            stack.append((e.args[0], c))
        elif op == "sub":
            stack.append((e.args[1], -c))
            stack.append((e.args[0], c))
        elif op == "neg":
            stack.append((e.args[0], -c))
        elif op == "mul" and e.args[0].is_const:
            stack.append((e.args[1], c * e.args[0].value))
        elif op == "const":
            constant += c * e.value
        else:
            slot = acc.get(id(e))
            if slot is None:
                acc[id(e)] = [e, c]
            else:
                slot[1] += c
    pos: list[Expr] = []
    negs: list[Expr] = []
    if constant > 0:
        pos.append(const(constant))
    elif constant < 0:
        negs.append(const(-constant))
    for t, c in acc.values():
        if c == 0.0:
            continue
        target = pos if c > 0 else negs
        m = abs(c)
        target.append(t if m == 1.0 else node("mul", const(m), t))
    if not pos and not negs:
        return ZERO
    if not negs:
        return _tree("add", pos)
    if not pos:
        return neg(_tree("add", negs))
    return node("sub", _tree("add", pos), _tree("add", negs))


def _tree(op: str, items: list[Expr]) -> Expr:
    while len(items) > 1:
        nxt = [node(op, items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if _is_sum(a) or _is_sum(b):
        return _combine([(a, 1.0), (b, 1.0)])
    if b.op == "neg":
        return sub(a, b.args[0])
    if a.op == "neg":
        return sub(b, a.args[0])
    ca, ta = _coeff(a)
    cb, tb = _coeff(b)
    if ta is tb and not ta.is_const:
        return _scaled(ca + cb, ta)
    if b.is_const:
        a, b = b, a  # constants to the left
    return node("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if b.is_zero:
        return a
    if a.is_zero:
        return neg(b)
    if a is b:
        return ZERO
    if _is_sum(a) or _is_sum(b):
        return _combine([(a, 1.0), (b, -1.0)])
    if b.op == "neg":
        return add(a, b.args[0])
    if b.is_const and b.value < 0:
        return add(a, const(-b.value))
    ca, ta = _coeff(a)
    cb, tb = _coeff(b)
    if ta is tb and not ta.is_const:
        return _scaled(ca - cb, ta)
    return node("sub", a, b)


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    if a.op == "sub":
        return node("sub", a.args[1], a.args[0])
    if a.op == "mul" and a.args[0].is_const:
        return _scaled(-a.args[0].value, a.args[1])
    return node("neg", a)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if b.is_const:
        a, b = b, a
    if a.is_value(1.0):
        return b
    if a.op == "neg" and b.op == "neg":
        return mul(a.args[0], b.args[0])
    if a.op == "neg":
        return neg(mul(a.args[0], b))
    if b.op == "neg":
        return neg(mul(a, b.args[0]))
    if a.is_const:
        if a.value == -1.0:
            return neg(b)
        if b.op == "mul" and b.args[0].is_const:
            return _scaled(a.value * b.args[0].value, b.args[1])
        return node("mul", a, b)
    if b.op == "mul" and b.args[0].is_const:
        return _scaled(b.args[0].value, mul(a, b.args[1]))
    if a.op == "mul" and a.args[0].is_const:
        return _scaled(a.args[0].value, mul(a.args[1], b))
    if a is b:
        return power(a, TWO)
    return node("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const and b.value != 0.0:
        if a.is_const:
            return const(a.value / b.value)
        if b.value == 1.0:
            return a
        if b.value == -1.0:
            return neg(a)
    if a.is_zero and not b.is_zero:
        return ZERO
    if a is b and not a.is_zero:
        return ONE
    if a.op == "neg":
        return neg(div(a.args[0], b))
    if a.op == "mul" and a.args[0].is_const:
        return _scaled(a.args[0].value, div(a.args[1], b))
    return node("div", a, b)


def _is_integer(v: float) -> bool:
    return float(v).is_integer()


def _pow_value(base: float, ex: float, symbolic_exponent: bool) -> float | None:
    """Real power under the engine's domain policy, or None when undefined."""
    if symbolic_exponent:
        if base <= 0.0:
            return None
    elif _is_integer(ex):
        if base == 0.0 and ex < 0:
            return None
    elif base < 0.0 or (base == 0.0 and ex <= 0):
        return None
    try:
        r = math.pow(base, ex)
    except (OverflowError, ValueError):
        return None
    return r if math.isfinite(r) else None


def power(a: Expr, b: Expr) -> Expr:
    if b.is_const:
        if b.value == 0.0:
            return ONE
        if b.value == 1.0:
            return a
        if a.is_const:
            r = _pow_value(a.value, b.value, False)
            if r is not None:
                return const(r)
        if a.op == "pow" and a.args[1].is_const and _is_integer(a.args[1].value) and _is_integer(b.value):
            return power(a.args[0], const(a.args[1].value * b.value))
    if a.is_value(1.0):
        return ONE
    return node("pow", a, b)


_FOLD = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
}


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if a.is_const:
        v = a.value
        if name in _FOLD:
            try:
                r = _FOLD[name](v)
            except OverflowError:
                r = math.inf
            if math.isfinite(r):
                return const(r)
        elif name == "log" and v > 0:
            return const(math.log(v))
        elif name == "sqrt" and v >= 0:
            return const(math.sqrt(v))
    return node(name, a)


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def tan(a) -> Expr:
    return func("tan", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def log(a) -> Expr:
    return func("log", as_expr(a))


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def add_all(terms: Iterable) -> Expr:
    """Sum with zero terms dropped, folded pairwise to keep the tree shallow."""
    items = [t for t in map(as_expr, terms) if not t.is_zero]
    if not items:
        return ZERO
    while len(items) > 1:
        nxt = [add(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


_BUILD = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "pow": power,
    "neg": neg,
}


def rebuild(op: str, args: Sequence[Expr]) -> Expr:
    if op in _BUILD:
        return _BUILD[op](*args)
    return func(op, args[0])


# ---------------------------------------------------------------------------
# traversal helpers

def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Unique nodes reachable from roots, children before parents."""
    seen: set[int] = set()
    out: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack: list[tuple[Expr, bool]] = [(root, False)]
        while stack:
            e, expanded = stack.pop()
            if expanded:
                out.append(e)
                continue
            if id(e) in seen:
                continue
            seen.add(id(e))
            stack.append((e, True))
            for a in reversed(e.args):
                if id(a) not in seen:
                    stack.append((a, False))
    return out


def free_vars(e: Expr | Iterable[Expr]) -> set[str]:
    roots = [e] if isinstance(e, Expr) else list(e)
    return {n.name for n in postorder(roots) if n.op == "var"}


def count_nodes(e: Expr | Iterable[Expr]) -> int:
    roots = [e] if isinstance(e, Expr) else list(e)
    return len(postorder(roots))


def simplify(e: Expr) -> Expr:
    """Re-apply the simplification rules bottom-up."""
    done: dict[int, Expr] = {}
    for n in postorder([e]):
        if n.args:
            done[id(n)] = rebuild(n.op, [done[id(a)] for a in n.args])
        else:
            done[id(n)] = n
    return done[id(e)]


def substitute(e: Expr, mapping: Mapping[str, Expr], _memo: dict | None = None) -> Expr:
    """Replace variables by expressions.  Pass a shared ``_memo`` dict when
    substituting the same mapping into many expressions."""
    memo = {} if _memo is None else _memo
    if id(e) in memo:
        return memo[id(e)][1]
    for n in postorder([e]):
        if id(n) in memo:
            continue
        if n.op == "var":
            r = mapping.get(n.name, n)
        elif n.args:
            new = [memo[id(a)][1] for a in n.args]
            if all(x is y for x, y in zip(new, n.args)):
                r = n
            else:
                r = rebuild(n.op, new)
        else:
            r = n
        # keep n alive so its id cannot be reused while memo is in use
        memo[id(n)] = (n, r)
    return memo[id(e)][1]


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of e with respect to variable v."""
    cached = e._dcache.get(v)
    if cached is not None:
        return cached
    # iterative post-order, pruned at nodes already differentiated
    stack: list[tuple[Expr, bool]] = [(e, False)]
    while stack:
        n, expanded = stack.pop()
        if v in n._dcache:
            continue
        if expanded:
            n._dcache[v] = _d_node(n, v)
            continue
        stack.append((n, True))
        for a in n.args:
            if v not in a._dcache:
                stack.append((a, False))
    return e._dcache[v]


def _d_node(n: Expr, v: str) -> Expr:
    op = n.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if n.name == v else ZERO
    a = n.args[0]
    da = a._dcache[v]
    if op == "neg":
        return neg(da)
    if op in FUNCTIONS:
        if da.is_zero:
            return ZERO
        if op == "sin":
            return mul(func("cos", a), da)
        if op == "cos":
            return neg(mul(func("sin", a), da))
        if op == "tan":
            return div(da, power(func("cos", a), TWO))
        if op == "exp":
            return mul(n, da)
        if op == "log":
            return div(da, a)
        if op == "sqrt":
            return div(da, mul(TWO, n))
    b = n.args[1]
    db = b._dcache[v]
    if op == "add":
        return add(da, db)
    if op == "sub":
        return sub(da, db)
    if op == "mul":
        return add(mul(da, b), mul(a, db))
    if op == "div":
        if db.is_zero:
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, TWO))
    if op == "pow":
        if b.is_const:
            if da.is_zero:
                return ZERO
            return mul(mul(b, power(a, const(b.value - 1))), da)
        return mul(n, add(mul(db, func("log", a)), div(mul(b, da), a)))
    raise ExprError(f"cannot differentiate {op}")  # pragma: no cover


# ---------------------------------------------------------------------------
# scalar evaluation

def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """IEEE double evaluation; raises DomainError naming the bad subexpression."""
    vals: dict[int, float] = {}
    for n in postorder([e]):
        vals[id(n)] = _eval_node(n, vals, point)
    return vals[id(e)]


def _eval_node(n: Expr, vals: dict, point: Mapping[str, float]) -> float:
    op = n.op
    if op == "const":
        return n.value
    if op == "var":
        try:
            return float(point[n.name])
        except KeyError:
            raise MissingVariableError(n.name) from None
    x = vals[id(n.args[0])]
    if op == "neg":
        return -x
    if op == "sin":
        return math.sin(x)
    if op == "cos":
        return math.cos(x)
    if op == "tan":
        return math.tan(x)
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError("exp overflow", n) from None
    if op == "log":
        if x <= 0:
            raise DomainError(f"log of non-positive value {x!r}", n)
        return math.log(x)
    if op == "sqrt":
        if x < 0:
            raise DomainError(f"sqrt of negative value {x!r}", n)
        return math.sqrt(x)
    y = vals[id(n.args[1])]
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "div":
        if y == 0:
            raise DomainError("division by zero", n)
        return x / y
    if op == "pow":
        r = _pow_value(x, y, not n.args[1].is_const)
        if r is None:
            raise DomainError(f"power {x!r}^{y!r} undefined", n)
        return r
    raise ExprError(f"unknown operator {op}")  # pragma: no cover


# ---------------------------------------------------------------------------
# rendering

_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        s = str(int(v))
    else:
        s = repr(v)
    return f"({s})" if v < 0 else s


def to_string(e: Expr) -> str:
    """Infix rendering with explicit parentheses; re-parses to the same tree."""
    out: dict[int, str] = {}
    for n in postorder([e]):
        if n.op == "const":
            s = _fmt_const(n.value)
        elif n.op == "var":
            s = n.name
        elif n.op == "neg":
            s = f"(-{out[id(n.args[0])]})"
        elif n.op in FUNCTIONS:
            s = f"{n.op}({_strip(out[id(n.args[0])])})"
        else:
            s = f"({out[id(n.args[0])]} {_SYMBOL[n.op]} {out[id(n.args[1])]})"
        out[id(n)] = s
    return _strip(out[id(e)])


def _strip(s: str) -> str:
    """Drop one pair of outer parentheses if they enclose the whole string."""
    if not (s.startswith("(") and s.endswith(")")):
        return s
    depth = 0
    for i, ch in enumerate(s):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0 and i < len(s) - 1:
            return s
    return s[1:-1]


# ---------------------------------------------------------------------------
# sampling-based equivalence

Domain = Mapping[str, tuple[float, float]]


def sample_points(domain: Domain, k: int, seed: int) -> list[dict[str, float]]:
    """k i.i.d. uniform points strictly inside the open box, deterministic per seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _Sampler(domain, seed).draw(k)


class _Sampler:
    def __init__(self, domain: Domain, seed: int):
        self.names = list(domain)
        self.bounds = np.array([domain[n] for n in self.names], dtype=float).reshape(-1, 2)
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ExprError("sampling interval with lo >= hi")
        self.rng = np.random.default_rng(seed)

    def draw_array(self, k: int) -> np.ndarray:
        lo, hi = self.bounds[:, 0:1], self.bounds[:, 1:2]
        x = self.rng.uniform(lo, hi, size=(len(self.names), k))
        # open interval: redraw the measure-zero left endpoint
        bad = x <= lo
        while bad.any():
            x[bad] = self.rng.uniform(np.broadcast_to(lo, x.shape)[bad], np.broadcast_to(hi, x.shape)[bad])
            bad = x <= lo
        return x

    def draw(self, k: int) -> list[dict[str, float]]:
        x = self.draw_array(k)
        return [{n: float(x[i, p]) for i, n in enumerate(self.names)} for p in range(k)]


@dataclass(frozen=True)
class Residual:
    value: float
    witness: dict[str, float] | None
    index: int | None = None

    def ok(self, tol: float) -> bool:
        return self.value <= tol


def residual(
    lhs: Sequence[Expr],
    rhs: Sequence[Expr],
    domain: Domain,
    k: int = 20,
    seed: int = 0,
) -> Residual:
    """Max over pairs and sample points of |l - r| / (1 + max(|l|, |r|)).

    Pairs that are structurally identical (or whose difference simplifies to
    zero) are skipped; the rest are sampled.  Points where any expression is
    undefined are redrawn up to RETRY_BOUND times.
    """
    from . import _kernels

    lhs = [as_expr(x) for x in lhs]
    rhs = [as_expr(x) for x in rhs]
    if len(lhs) != len(rhs):
        raise ValueError("lhs and rhs differ in length")
    todo = [i for i, (a, b) in enumerate(zip(lhs, rhs)) if not (a is b or sub(a, b).is_zero)]
    if not todo:
        return Residual(0.0, None)
    roots = [lhs[i] for i in todo] + [rhs[i] for i in todo]
    names = sorted(free_vars(roots))
    missing = [n for n in names if n not in domain]
    if missing:
        raise MissingVariableError(missing[0])
    sampler = _Sampler({n: domain[n] for n in names}, seed) if names else None
    prog = _kernels.compile_program(roots, names)

    if sampler is None:
        x = np.zeros((0, k))
    else:
        x = sampler.draw_array(k)
    vals = prog.run(x)
    for _ in range(RETRY_BOUND):
        bad = ~np.all(np.isfinite(vals), axis=0)
        if not bad.any():
            break
        if sampler is None:
            break
        x[:, bad] = sampler.draw_array(int(bad.sum()))
        vals = prog.run(x)
    bad = ~np.all(np.isfinite(vals), axis=0)
    if bad.any():
        p = int(np.flatnonzero(bad)[0])
        point = {n: float(x[i, p]) for i, n in enumerate(names)}
        detail = ""
        for r in roots:
            try:
                evaluate(r, point)
            except ExprError as err:
                detail = f": {err}"
                break
        raise UnsampleableError(f"no valid sample point after {RETRY_BOUND} retries at {point}{detail}")

    m = len(todo)
    left, right = vals[:m], vals[m:]
    res = np.abs(left - right) / (1.0 + np.maximum(np.abs(left), np.abs(right)))
    flat = int(np.argmax(res))
    row, col = divmod(flat, res.shape[1])
    witness = {n: float(x[i, col]) for i, n in enumerate(names)}
    return Residual(float(res[row, col]), witness, todo[row])


def equivalent(
    e1,
    e2,
    domain: Domain,
    k: int = 20,
    tol: float = 1e-9,
    seed: int = 0,
) -> bool:
    if k < 1:
        raise ValueError("k must be >= 1")
    return residual([as_expr(e1)], [as_expr(e2)], domain, k, seed).value <= tol


def is_zero_on(e, domain: Domain, k: int = 20, tol: float = 1e-9, seed: int = 0) -> bool:
    return equivalent(e, ZERO, domain, k, tol, seed)
