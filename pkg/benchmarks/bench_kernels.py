"""Benchmark the jitted kernels against their pure-numpy references.

Run with the default environment to time the jitted path; run with
MMCL_DISABLE_NUMBA=1 to confirm the fallback path is selected (both rows
then time the same numpy implementation).

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from mmcl import kernels


def _time(fn, args, repeats):
    fn(*args)  # warm-up (triggers JIT compilation on the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    x = rng.standard_normal((512, 512))
    s = rng.standard_normal((512, 256))
    sim = rng.standard_normal((400, 400))
    sim = (sim + sim.T) / 2
    pids = rng.integers(0, 200, size=400).astype(np.int64)

    cases = [
        ("sigmoid 512x512", kernels.sigmoid, kernels._sigmoid_np, (x,)),
        ("softplus 512x512", kernels.softplus, kernels._softplus_np, (x,)),
        ("logsumexp_rows 512x256", kernels.logsumexp_rows, kernels._logsumexp_rows_np, (s,)),
        ("top5_same_patient 400", kernels.top5_same_patient, kernels._top5_same_patient_np,
         (sim, pids)),
    ]

    label = "numba" if kernels.NUMBA_ACTIVE else "numpy (fallback active)"
    print(f"active path: {label}")
    print(f"{'kernel':<26} {'active (ms)':>12} {'numpy (ms)':>12} {'speedup':>8}")
    for name, active, reference, call_args in cases:
        t_active = _time(active, call_args, args.repeats) * 1e3
        t_numpy = _time(reference, call_args, args.repeats) * 1e3
        ratio = t_numpy / t_active if t_active > 0 else float("inf")
        print(f"{name:<26} {t_active:>12.3f} {t_numpy:>12.3f} {ratio:>7.1f}x")
        # both paths must agree to float64 rounding
        a, b = np.asarray(active(*call_args)), np.asarray(reference(*call_args))
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)


if __name__ == "__main__":
    main()
