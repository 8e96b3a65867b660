"""Single-sign fault injection for mutation testing of the check suite.

Each fault flips the sign of one term in a lift, frame or second-fundamental
form formula.  A sound suite must report at least one failure for every one.
"""
from __future__ import annotations

import contextlib
import contextvars

FAULTS = {
    "lift.base_block": "negate Gamma-bar^k_{ji} (base block of the lifted connection)",
    "lift.fibre_dgamma": "negate the y^s d_s Gamma term of Gamma-bar^kbar_{ji}",
    "lift.fibre_curvature": "negate the -y^s R^k_{sji} term of Gamma-bar^kbar_{ji}",
    "lift.mixed_barred_first": "negate Gamma-bar^kbar_{jbar i}",
    "lift.mixed_barred_second": "negate Gamma-bar^kbar_{j ibar}",
    "lift.horizontal_vector": "negate the fibre part of the horizontal lift ^H X",
    "frame.tangent_fibre": "negate d_j v^h in the fibre block of B_(j)",
    "frame.inverse_fibre": "negate -d_j v^h in the inverse row C_A^h",
    "sff.second_derivative": "negate d_j d_i v^h in the closed form of H",
    "sff.curvature_term": "negate the v^t R^h_{tji} term in the closed form of H",
}

_active: contextvars.ContextVar[frozenset] = contextvars.ContextVar("tanlift_faults", default=frozenset())


def sign(name: str) -> int:
    """-1 if the named fault is active, else +1."""
    if name not in FAULTS:
        raise KeyError(f"unknown fault {name!r}")
    return -1 if name in _active.get() else 1


def active() -> frozenset:
    return _active.get()


@contextlib.contextmanager
def inject(*names: str):
    unknown = [n for n in names if n not in FAULTS]
    if unknown:
        raise KeyError(f"unknown fault(s): {', '.join(unknown)}")
    token = _active.set(_active.get() | frozenset(names))
    try:
        yield
    finally:
        _active.reset(token)
