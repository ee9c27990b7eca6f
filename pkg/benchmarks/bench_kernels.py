"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--T 3000] [--repeat 5]

Both backends run on identical inputs; the script checks that they agree
before printing timings.
"""

import argparse
import time

import numpy as np

from geotess import _kernels_py
from geotess.surface import build_genus2_surface
from geotess.tracer import VERTEX_TOL, tangent_vector

try:
    from geotess import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=3000.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    S = build_genus2_surface()
    rng = np.random.default_rng(args.seed)
    X, U = tangent_vector(S.sample_liouville(rng))
    normals, pairings = S.octagon.side_normals, S.octagon.lorentz_pairings
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")

    results = {}
    for name, mod in backends.items():
        t_flow, flow = best_of(lambda: mod.trace_flow(normals, pairings, X, U, args.T, VERTEX_TOL), args.repeat)
        starts, ends = flow[0], flow[1]
        k0, k1 = starts[:, :2] / starts[:, 2:], ends[:, :2] / ends[:, 2:]
        cell = max(float(np.abs(k1 - k0).max(axis=1).mean()), 1e-3)
        t_grid, inter = best_of(lambda: mod.segment_intersections(k0, k1, cell, 1e-12), args.repeat)
        results[name] = (t_flow, t_grid, flow, inter)
        print(f"{name:7s} trace_flow {1e3 * t_flow:9.2f} ms   segment_intersections "
              f"{1e3 * t_grid:9.2f} ms   ({len(starts)} arcs, {len(inter[0])} crossings)")

    if "cython" in results:
        py, cy = results["python"], results["cython"]
        same_arcs = np.allclose(py[2][0], cy[2][0], atol=1e-9) and np.array_equal(py[2][3], cy[2][3])
        same_inter = all(np.array_equal(a, b) for a, b in zip(py[3][:2], cy[3][:2]))
        print(f"agreement: arcs {same_arcs}, crossings {same_inter}")
        print(f"speedup: trace_flow x{py[0] / cy[0]:.1f}, segment_intersections x{py[1] / cy[1]:.1f}")


if __name__ == "__main__":
    main()
