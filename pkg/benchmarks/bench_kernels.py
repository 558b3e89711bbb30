"""Benchmark the fused training-step kernel: numba @njit vs pure numpy.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from zslkit import kernels

SIZES = [
    # (batch, classes, d, m) - small ZSL problems up to wide word embeddings
    (50, 10, 32, 20),
    (100, 18, 128, 64),
    (100, 18, 128, 1100),
    (256, 40, 128, 1100),
    (512, 40, 256, 2048),
]


def bench(backend, W_e, Phi_e, labels, Psi_e, repeats):
    kernels.nll_and_grad(W_e, Phi_e, labels, Psi_e, backend=backend)  # warmup
    start = time.perf_counter()
    for _ in range(repeats):
        kernels.nll_and_grad(W_e, Phi_e, labels, Psi_e, backend=backend)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba not installed; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'batch':>6} {'K':>4} {'d':>5} {'m':>5} "
          f"{'numpy':>10} {'numba':>10} {'speedup':>8}")
    for batch, n_classes, d, m in SIZES:
        W_e = rng.normal(size=(d + 1, m + 1))
        Phi_e = np.hstack([rng.normal(size=(batch, d)), np.ones((batch, 1))])
        Psi_e = np.hstack([rng.normal(size=(n_classes, m)),
                           np.ones((n_classes, 1))])
        labels = rng.integers(0, n_classes, size=batch)
        t_np = bench("numpy", W_e, Phi_e, labels, Psi_e, args.repeats)
        t_nb = bench("numba", W_e, Phi_e, labels, Psi_e, args.repeats)
        print(f"{batch:>6} {n_classes:>4} {d:>5} {m:>5} "
              f"{t_np * 1e3:>8.3f}ms {t_nb * 1e3:>8.3f}ms {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
