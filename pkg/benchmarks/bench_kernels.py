"""Time the compiled kernels against their numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from dynbeta import kernels


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    latent = rng.normal(size=(3000, 2))
    centroids = rng.normal(size=(50, 2))
    labels = rng.integers(0, 20, 3000)
    spectra = rng.random((1500, 193))
    return [
        ("assign_labels 3000x2, K=50", "assign_labels", (latent, centroids)),
        ("silhouette 3000x2, K=20", "silhouette_samples", (latent, labels, 20)),
        ("complete_linkage 1500x193", "complete_linkage", (spectra,)),
    ]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if kernels.cython_backend is None:
        print("compiled extension not available; nothing to compare")
        return
    print(f"{'kernel':<30} {'cython s':>10} {'numpy s':>10} {'speed-up':>9}")
    for name, fn, fargs in cases():
        tc = _best(lambda: getattr(kernels.cython_backend, fn)(*fargs), args.repeat)
        tp = _best(lambda: getattr(kernels.python_backend, fn)(*fargs), args.repeat)
        print(f"{name:<30} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
