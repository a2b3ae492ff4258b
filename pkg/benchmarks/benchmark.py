"""Compare the compiled kernels against the NumPy fallback.

    python3 benchmarks/benchmark.py [--repeat 3] [--scale 1.0]

Each kernel runs on identical inputs in both backends; the table reports the
best wall time of ``--repeat`` runs, the speedup, and the max absolute
difference between the two outputs.
"""
import argparse
import time

import numpy as np

from mckv._backend import compiled_kernels, python_kernels
from mckv.mollify import bump_normalization


def best_time(fn, repeat: int):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(scale: float):
    rng = np.random.default_rng(0)
    n_pts = int(20_000 * scale)
    xs = np.sort(rng.normal(size=n_pts))
    q = np.linspace(-4, 4, int(2_000 * scale))
    norm = bump_normalization(1)
    m = int(40 * max(scale, 0.25))
    a = rng.random(m)
    b = rng.random(m)
    cost = np.abs(rng.normal(size=(m, 1)) - rng.normal(size=(1, m)))
    k = int(100_000 * scale)
    lower, upper = -rng.random(k), -rng.random(k)
    diag = 2.5 + rng.random(k)
    rhs = rng.random(k)
    streams = np.arange(int(100_000 * scale), dtype=np.uint64)
    wx = np.full(n_pts, 1.0 / n_pts)
    ys = np.sort(rng.normal(0.3, 1.2, n_pts))
    return {
        "philox normals": lambda K: K.normals(7, streams, 3, 1, 0),
        "kde (sorted window)": lambda K: K.kde_sorted(xs, q, 16, norm),
        "kde (all pairs)": lambda K: K.kde_naive(xs[: n_pts // 4], q, 16, norm),
        "quantile W_1": lambda K: K.wasserstein_1d_cost(xs, wx, ys, wx, 1.0),
        "thomas solve": lambda K: K.thomas(lower, diag, upper, rhs),
        "network simplex": lambda K: K.network_simplex(a / a.sum(), b / b.sum(), cost)[0],
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies problem sizes")
    args = ap.parse_args(argv)
    if compiled_kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':<22}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, fn in cases(args.scale).items():
        tc, oc = best_time(lambda: fn(compiled_kernels), args.repeat)
        tp, op = best_time(lambda: fn(python_kernels), args.repeat)
        diff = float(np.max(np.abs(np.asarray(oc, dtype=float) - np.asarray(op, dtype=float))))
        print(f"{name:<22}{tc:>14.4f}{tp:>14.4f}{tp / tc:>10.1f}{diff:>13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
