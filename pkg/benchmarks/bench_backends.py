#!/usr/bin/env python3
"""Compare the numba and numpy kernel lanes on the hot paths.

Runs each workload on both lanes, reports wall time and speedup, and checks
that the lanes produce identical bits (same reduction order, same libm calls,
so equality is exact, not approximate). JIT compilation time is excluded by a
warmup pass.

Usage: python3 benchmarks/bench_backends.py [--quick]
"""
import argparse
import time

import numpy as np

from extinctia._backend import HAS_NUMBA, get_lane
from extinctia.mc_sim import _exact_step_params
from extinctia.feller_path import FellerModel


def _time(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _flatten(out):
    if isinstance(out, tuple):
        parts = []
        for x in out:
            parts.append(np.atleast_1d(np.asarray(x, dtype=np.float64)))
        return np.concatenate(parts)
    return np.atleast_1d(np.asarray(out, dtype=np.float64))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()

    if not HAS_NUMBA:
        print("numba is not importable; nothing to compare")
        return 0

    probs = np.array([0.5, 0.0, 0.5])
    gw_reps = 20000 if args.quick else 200000
    fel_reps = 2000 if args.quick else 20000
    grid = 512 if args.quick else 2048
    model = FellerModel(alpha=1.0, sigma2=1.0, T=1.0, K=2.0)
    h = model.T / 64
    lam_fac, b = _exact_step_params(model, h)

    workloads = {
        "gw_mc (K=20, N=4)": lambda lane: lane.gw_mc_kernel(
            np.uint64(7), probs, np.int64(20), np.int64(4), np.int64(gw_reps), False
        ),
        "feller_mc (exact, 64 steps)": lambda lane: lane.feller_mc_kernel(
            np.uint64(7), 2.0, np.int64(64), False, model.alpha, 1.0, h, lam_fac, b,
            np.int64(fel_reps),
        ),
        f"dp_oracle (G={grid}, N=4)": lambda lane: lane.dp_kernel(
            probs, float(np.log(0.5)), np.int64(grid), 3.0, np.int64(4)
        ),
        "legendre x2000": lambda lane: [
            lane.legendre_kernel(probs, y, 1.0) for y in np.linspace(0.01, 1.99, 2000)
        ],
    }

    numba_lane = get_lane("numba")
    numpy_lane = get_lane("numpy")

    # warm up the jit so compilation is not measured
    for fn in workloads.values():
        fn(numba_lane)

    print(f"{'workload':<28} {'numba':>10} {'numpy':>10} {'speedup':>8}  bits")
    for name, fn in workloads.items():
        out_nb, t_nb = _time(lambda: fn(numba_lane))
        out_np, t_np = _time(lambda: fn(numpy_lane))
        same = np.array_equal(_flatten(out_nb), _flatten(out_np))
        print(
            f"{name:<28} {t_nb:>9.3f}s {t_np:>9.3f}s {t_np / t_nb:>7.1f}x  "
            f"{'identical' if same else 'DIFFER'}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
