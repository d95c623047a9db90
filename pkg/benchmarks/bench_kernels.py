"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from svi_audit._core import available_backends


def workloads(k):
    rng = np.random.default_rng(0)
    data = rng.random(30)
    stack = rng.integers(0, 2, (2000, 30, 4)).astype(np.int64)
    a, b = rng.random(400), rng.random(300)
    return {
        "uniforms (1e6)": lambda: k.uniforms(1, 2, 0, 1_000_000),
        "bootstrap_means (n=30, 5000)": lambda: k.bootstrap_means(data, 1, 2, 5000),
        "resample_indices (n=30, 5000)": lambda: k.resample_indices(1, 2, 30, 5000),
        "cochran_q_many (2000 cells)": lambda: k.cochran_q_many(stack),
        "mann_whitney_u (400 x 300)": lambda: k.mann_whitney_u(a, b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; only the NumPy fallback is available")
    timings = {}
    for name, k in backends.items():
        for label, fn in workloads(k).items():
            fn()
            timings[(name, label)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    labels = list(workloads(backends["python"]))
    print(f"{'kernel':32s} {'python (ms)':>12s} {'compiled (ms)':>14s} {'speedup':>8s}")
    for label in labels:
        py = timings[("python", label)] * 1e3
        if ("compiled", label) in timings:
            co = timings[("compiled", label)] * 1e3
            print(f"{label:32s} {py:12.2f} {co:14.2f} {py / co:7.1f}x")
        else:
            print(f"{label:32s} {py:12.2f} {'-':>14s}")


if __name__ == "__main__":
    main()
