"""Benchmark: compiled stepper kernel vs pure-Python fallback.

Times the raw stepping loop (no event location) and the full
``integrate`` pipeline on two representative runs:

* the unbound figure-constants passage (deep dive through the turning
  radius, span 40),
* a long circular orbit (span 700, ~26k accepted steps).

Usage: python benchmarks/bench_stepper.py [--repeat N]
"""

import argparse
import math
import time

import numpy as np

from spinpair.geodesic import (
    GeodesicConstants,
    integrate,
    state_from_constants,
)
from spinpair.geodesic.integrate import _backend_module, available_backends


CASES = {
    "unbound dive (span 40)": (
        GeodesicConstants(P=5.0, X=1.2, A=4.0, W=1.0), 1.0, -1, 40.0),
    "circular orbit (span 700)": (
        GeodesicConstants(P=0.8, X=1.2, A=4.0, W=1.0), 8.0 / 3.0, 1, 700.0),
}


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled extension missing; build it with "
              "'python setup.py build_ext --inplace' for the comparison")

    for name, (constants, r0, sign_ur, span) in CASES.items():
        state0 = state_from_constants(constants, r0, math.pi / 2, sign_ur, 1)
        y0 = np.array(state0.as_tuple())
        print(f"\n== {name} ==")
        raw = {}
        for backend in backends:
            mod = _backend_module(backend)
            run = lambda: mod.integrate_raw(
                y0, 0.0, span, 1e-10 * 0.015625, 1e-12 * 0.015625, 1e-9, 0.3, 10**7
            )
            _, s_arr, _, _ = run()
            raw[backend] = best_of(args.repeat, run)
            steps = len(s_arr) - 1
            print(f"  raw stepping   {backend:>8}: {raw[backend]*1e3:8.1f} ms"
                  f"  ({steps} steps, {steps/raw[backend]/1e3:.0f}k steps/s)")
        if len(raw) == 2:
            print(f"  raw speedup: {raw['python']/raw['compiled']:.1f}x")

        full = {}
        for backend in backends:
            full[backend] = best_of(
                args.repeat, lambda: integrate(state0, span, backend=backend)
            )
            print(f"  full pipeline  {backend:>8}: {full[backend]*1e3:8.1f} ms")
        if len(full) == 2:
            print(f"  full-pipeline speedup: {full['python']/full['compiled']:.1f}x")


if __name__ == "__main__":
    main()
