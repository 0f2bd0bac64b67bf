"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and problem size with the best wall time of each
backend and the speed-up. Both backends are checked to agree before timing.
"""
import argparse
import time

import numpy as np

from vpaw3d.kernels import compiled_kernels, python_kernels


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bessel_cases(rng):
    for l in (0, 1, 3):
        for n in (10_000, 1_000_000):
            x = rng.uniform(0.0, 200.0, n)
            yield f"sph_bessel l={l} n={n}", (lambda k, x=x, l=l: k.sph_bessel(l, x))


def ewald_cases(rng):
    L = 5.0
    centers = np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]])
    charges = np.array([3.0, 3.0])
    for n in (1_000, 50_000):
        pts = rng.uniform(-L / 2, L / 2, (n, 3))
        yield (f"screened_coulomb_sum n={n}",
               lambda k, p=pts: k.screened_coulomb_sum(p, centers, charges, L, 1.5, 2, -1))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled_kernels is None:
        raise SystemExit("compiled kernels are not available; build the extension first")
    rng = np.random.default_rng(0)
    print(f"{'case':40s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speed-up':>9s}")
    for name, call in [*bessel_cases(rng), *ewald_cases(rng)]:
        ref, got = call(python_kernels), call(compiled_kernels)
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-14, equal_nan=True):
            raise SystemExit(f"backends disagree on {name}")
        slow = best_time(lambda: call(python_kernels), args.repeat)
        fast = best_time(lambda: call(compiled_kernels), args.repeat)
        print(f"{name:40s} {slow * 1e3:12.2f} {fast * 1e3:14.2f} {slow / fast:9.1f}x")


if __name__ == "__main__":
    main()
