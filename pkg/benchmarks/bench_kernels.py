"""Time the compiled local linear kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends receive identical sorted inputs; the table reports the best
wall time per call and the maximum absolute difference in the fitted values
(ridged, ill-conditioned windows included).
"""
import argparse
import timeit

import numpy as np

from sivcm import _kernels_py
from sivcm.linalg import PIVOT_TOL, RIDGE_EPS
from sivcm.simulation import SimConfig, simulate_dataset

try:
    from sivcm import _kernels
except ImportError:
    _kernels = None


def case(n):
    cfg = SimConfig(n=n)
    d = simulate_dataset(cfg, 0)
    U = d.X @ np.asarray(cfg.beta0)
    o = np.argsort(U)
    h = float(np.std(U) * n ** -0.2) * 0.5
    return (np.ascontiguousarray(U[o]), np.ascontiguousarray(d.Z[o]),
            np.ascontiguousarray(d.Y[o]), np.ascontiguousarray(U[o]), h, 0, PIVOT_TOL, RIDGE_EPS)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="100,400,1600,6400")
    args = ap.parse_args()
    if _kernels is None:
        print("compiled core not built; run `pip install -e . --no-build-isolation` first")
        return
    print(f"{'n':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max |diff|':>11}")
    for n in (int(s) for s in args.sizes.split(",")):
        a = case(n)
        fp = lambda: _kernels_py.local_linear_batch(*a)  # noqa: E731
        fc = lambda: _kernels.local_linear_batch(*a)  # noqa: E731
        reps = max(1, 2000 // n)
        tp = min(timeit.repeat(fp, number=reps, repeat=args.repeat)) / reps
        tc = min(timeit.repeat(fc, number=reps, repeat=args.repeat)) / reps
        ok = np.asarray(fc()[3]) == 0
        diff = float(np.max(np.abs(np.asarray(fp()[0])[ok] - np.asarray(fc()[0])[ok])))
        print(f"{n:>6} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>8.1f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
