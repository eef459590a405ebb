"""Compare the compiled and numpy kernel backends on element-local derivative application.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--sizes 16 32 64] [--degrees 0 1 2]

Both backends are imported directly, so the comparison does not depend on
``DGCALC_PURE_PYTHON``. Outputs are checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from dgcalc import build_triangulated, local_derivative_matrices
from dgcalc.field import get_space
from dgcalc.kernels import _pykernels

try:
    from dgcalc.kernels import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


def _case(n: int, r: int, rng):
    mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], n)
    loc = local_derivative_matrices(mesh, r)
    selfb, nbrb = loc.blocks(0, "+")
    beta = rng.standard_normal(loc.minv.shape[:2])
    extra = np.zeros_like(beta)
    args = tuple(np.ascontiguousarray(a) for a in (selfb, loc.nbr.astype(np.int64), nbrb, beta, extra, loc.minv))
    table = np.ascontiguousarray(get_space(mesh, r).V)
    return mesh, args, table


def run(sizes=(16, 32, 64), degrees=(0, 1, 2), repeat: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    rows = []
    for r in degrees:
        for n in sizes:
            mesh, args, table = _case(n, r, rng)
            beta = args[3]
            row = {"r": r, "n": n, "elements": mesh.num_elements}
            ref = _pykernels.apply_local(*args)
            row["apply_py"] = min(timeit.repeat(lambda: _pykernels.apply_local(*args), number=1, repeat=repeat))
            row["quad_py"] = min(timeit.repeat(lambda: _pykernels.quad_values(beta, table), number=1, repeat=repeat))
            if _ckernels is not None:
                out = _ckernels.apply_local(*args)
                row["max_diff"] = float(np.max(np.abs(out - ref)))
                row["apply_c"] = min(timeit.repeat(lambda: _ckernels.apply_local(*args), number=1, repeat=repeat))
                row["quad_c"] = min(timeit.repeat(lambda: _ckernels.quad_values(beta, table), number=1,
                                                  repeat=repeat))
            rows.append(row)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--degrees", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    rows = run(args.sizes, args.degrees, args.repeat)
    if _ckernels is None:
        print("compiled backend unavailable; numpy timings only")
    print(f"{'r':>2} {'n':>4} {'elements':>9} {'apply numpy':>12} {'apply cython':>13} {'speedup':>8} "
          f"{'quad numpy':>11} {'quad cython':>12} {'max diff':>9}")
    def ms(t):
        return "-" if t is None else f"{t * 1e3:.3f}ms"

    for row in rows:
        ac, qc = row.get("apply_c"), row.get("quad_c")
        speed = "-" if ac is None else f"{row['apply_py'] / ac:.1f}x"
        print(f"{row['r']:>2} {row['n']:>4} {row['elements']:>9} {ms(row['apply_py']):>12} {ms(ac):>13} "
              f"{speed:>8} {ms(row['quad_py']):>11} {ms(qc):>12} {row.get('max_diff', float('nan')):>9.1e}")
    return rows


if __name__ == "__main__":
    main()
