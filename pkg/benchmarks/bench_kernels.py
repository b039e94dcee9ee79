#!/usr/bin/env python3
"""Stepping-kernel benchmark: compiled extension vs numpy fallback.

Measures the RK3 advance loop at LES- and DNS-scale grids and reports the
per-step cost and speedup.  The selector routes small grids to the compiled
kernel, so the interesting numbers are the small-N ones.

Usage: python benchmarks/bench_kernels.py [--steps 2000]
"""

import argparse
import time

import numpy as np

from relexi.sim import kernels


def time_kernel(name: str, n: int, steps: int) -> float:
    x = np.arange(n) * 2 * np.pi / n
    u = np.sin(x) + 0.2 * np.sin(3 * x + 1.0) + 0.1 * np.sin(7 * x + 2.0)
    visc = np.full(n, 0.02)
    dx = 2 * np.pi / n
    dt = min(5e-4, 0.1 * dx ** 2 / 0.1)    # conservative diffusive bound
    dts = np.full(steps, dt)
    t0 = time.perf_counter()
    _, done = kernels.advance_kernel(u, dts, 0.01, 0.3, visc, n // 3,
                                     kernel=name)
    assert done == steps, f"blow-up after {done} steps at n={n}"
    return (time.perf_counter() - t0) / steps


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=2000)
    args = parser.parse_args()

    print(f"extension available: {kernels.have_extension()}")
    print(f"{'n':>6s} {'numpy us/step':>14s} {'cython us/step':>15s} "
          f"{'speedup':>8s} {'selected':>9s}")
    for n in (16, 24, 32, 64, 128, 512, 2048):
        steps = args.steps if n <= 128 else max(args.steps // 10, 100)
        t_py = time_kernel("py", n, steps)
        row = f"{n:6d} {t_py * 1e6:14.1f}"
        if kernels.have_extension():
            t_cy = time_kernel("cy", n, steps)
            row += f" {t_cy * 1e6:15.1f} {t_py / t_cy:8.1f}x"
        else:
            row += f" {'-':>15s} {'-':>8s}"
        row += f" {kernels.kernel_name(n):>9s}"
        print(row)


if __name__ == "__main__":
    main()
