"""Compare the compiled and pure-Python sphere kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Reports best-of-``repeat`` wall time for three workloads and checks that both
backends produce identical output from identical generator states.
"""
import argparse
import time

import numpy as np

from choibingham import _kernels
from choibingham.frame_bingham import ChainConfig, depolarizing_parameter, sample_chain


def angle_draws(kernel, count=2000):
    rng = np.random.default_rng(1)
    return [kernel.sample_angle(50.0, 3.0, -2.0, rng) for _ in range(count)]


def pair_gibbs(kernel, count=200):
    rng = np.random.default_rng(2)
    lam = np.linspace(-40.0, 40.0, 14)
    c = np.linspace(-5.0, 5.0, 14)
    y = np.ones(14) / np.sqrt(14.0)
    for _ in range(count):
        kernel.pair_gibbs(y, lam, c, 2, rng)
    return y.copy()


def chain(backend, sweeps=100):
    cfg = ChainConfig(sample_count=sweeps, burn_in=0, thinning=1, seed=3, backend=backend)
    return sample_chain(depolarizing_parameter(1e3), 2, 4, cfg)


def best_time(func, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if "cython" not in _kernels.BACKENDS:
        print("compiled backend unavailable; only the pure-Python timings are shown")
    workloads = [
        ("2000 angle draws", lambda b: angle_draws(_kernels.get_kernel(b))),
        ("200 pair-Gibbs sweeps, D=14", lambda b: pair_gibbs(_kernels.get_kernel(b))),
        ("100 chain sweeps, N=2 k=4", lambda b: chain(b)),
    ]
    print(f"{'workload':32s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>8s} identical")
    for name, work in workloads:
        tp, op = best_time(lambda: work("python"), args.repeat)
        if "cython" in _kernels.BACKENDS:
            tc, oc = best_time(lambda: work("cython"), args.repeat)
            same = bool(np.array_equal(np.asarray(op), np.asarray(oc)))
            print(f"{name:32s} {tp:12.4f} {tc:12.4f} {tp / tc:8.1f} {same}")
        else:
            print(f"{name:32s} {tp:12.4f} {'-':>12s} {'-':>8s} -")


if __name__ == "__main__":
    main()
