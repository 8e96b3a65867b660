"""Compare the numba and numpy backends of the batch expression evaluator.

The workload is the curvature of the lifted connection of the round sphere,
pushed through the adapted frame of a polynomial section (a DAG of a few
thousand shared nodes), evaluated at several batch sizes.  The identity
suite evaluates about 20 points per check, where per-instruction dispatch
dominates and the compiled kernel matters most.

    python3 benchmarks/bench_eval.py [--points 20 200 2000 20000] [--repeat 5]
"""
import argparse
import time
from pathlib import Path

import numpy as np

from tanlift import expr as ex
from tanlift._kernels import compile_program
from tanlift.dsl import load_workspace
from tanlift.section import frame_curvature

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def build_program():
    decl = load_workspace(CORPUS / "sphere.lg").manifolds["sphere"]
    M = decl.manifold()
    tan, ver = frame_curvature(decl.field("poly", M), decl.connection_object(M))
    roots = [e for e in np.concatenate([tan.ravel(), ver.ravel()]) if not e.is_zero]
    names = list(M.coords)
    return compile_program(roots, names), dict(M.domain), names, len(roots)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, nargs="+", default=[20, 200, 2000, 20000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    prog, dom, names, nroots = build_program()
    rng = np.random.default_rng(0)
    print(f"program: {len(prog.ops)} instructions, {nroots} outputs")
    prog.run(np.zeros((len(names), 1)) + 1.0, backend="numba")  # JIT compile outside the timing
    print(f"{'points':>8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for k in args.points:
        x = np.array([rng.uniform(*dom[n], size=k) for n in names])
        a = prog.run(x, backend="numpy")
        b = prog.run(x, backend="numba")
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12, equal_nan=True)
        t_np = best_of(lambda: prog.run(x, backend="numpy"), args.repeat)
        t_nb = best_of(lambda: prog.run(x, backend="numba"), args.repeat)
        print(f"{k:>8} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
