#!/usr/bin/env python3
"""Benchmark the compiled jet kernel against the pure-Python fallback.

Two workloads: raw kernel throughput on a composed expression evaluated
point by point, and a full residual sweep (implicit constraint solve plus
the four-variable residual) through whichever backend is passed in.

Usage: python benchmarks/bench_jets.py [--points 20000]
"""

import argparse
import time

import numpy as np

from batlab import _jetpy

BACKENDS = {"python": _jetpy}
try:
    from batlab import _jetcore

    BACKENDS["compiled"] = _jetcore
except ImportError:
    pass


def composed(J, t, x, y):
    a = J.variable(0, t, 3)
    b = J.variable(1, x, 3)
    c = J.variable(2, y, 3)
    e = J.exp(a * 0.3) * J.sin(b) + J.sqrt(c + 2.0) / (b + 3.0)
    return e * e + J.powc(a, 3) - J.log(c + 1.5) * b


def bench_kernel(J, points: np.ndarray) -> float:
    start = time.perf_counter()
    acc = 0.0
    for t, x, y in points:
        acc += composed(J, t, x, y).value
    elapsed = time.perf_counter() - start
    assert np.isfinite(acc)
    return elapsed


def bench_residual_sweep(J, points4: np.ndarray) -> float:
    """Four-variable residual assembled from jets of an explicit field."""
    start = time.perf_counter()
    worst = 0.0
    for x1, x2, xb1, xb2 in points4:
        a = J.variable(0, x1, 4)
        b = J.variable(1, x2, 4)
        c = J.variable(2, xb1, 4)
        d = J.variable(3, xb2, 4)
        phi = a * b + J.exp(c * 0.5) + d * d  # holo + antiholo: residual ~ 0
        g = phi.grad
        H = phi.hess
        raw = (g[0] * g[2] * H[1, 3] + g[1] * g[3] * H[0, 2]
               - g[0] * g[3] * H[2, 1] - g[1] * g[2] * H[0, 3])
        worst = max(worst, abs(raw))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    return elapsed


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--points", type=int, default=20000)
    args = parser.parse_args()

    rng = np.random.default_rng(1)
    pts3 = rng.uniform(0.3, 1.5, size=(args.points, 3))
    pts4 = rng.uniform(0.3, 1.5, size=(args.points // 2, 4))

    results = {}
    for name, J in BACKENDS.items():
        k = bench_kernel(J, pts3)
        r = bench_residual_sweep(J, pts4)
        results[name] = (k, r)
        print(f"{name:>9}: kernel {args.points / k:>10.0f} evals/s "
              f"({k:.3f} s), residual sweep {len(pts4) / r:>10.0f} pts/s ({r:.3f} s)")

    if "compiled" in results and "python" in results:
        pk, pr = results["python"]
        ck, cr = results["compiled"]
        print(f"  speedup: kernel {pk / ck:.1f}x, residual sweep {pr / cr:.1f}x")
    else:
        print("  compiled backend not built; showing python fallback only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
