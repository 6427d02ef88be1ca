"""Time each hot kernel under the numpy and numba backends.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Prints one row per kernel with the best-of-R time per call for both
backends and their ratio. Both tables are imported in-process, so the
PIATLAB_NUMBA flag does not matter here.
"""
import argparse
import timeit

import numpy as np

from piatlab._kernels import NUMBA_KERNELS, NUMPY_KERNELS


def cases(n, rng):
    x = rng.uniform(0, 1, (n // 2, 2))
    x_adv = np.clip(x + rng.uniform(-0.2, 0.2, x.shape), 0, 1)
    d = rng.standard_normal(x.shape)
    z = rng.standard_normal((n // 10, 10))
    h = rng.standard_normal(n)
    p, g = rng.standard_normal(n), rng.standard_normal(n)
    return {
        "log_softmax_rows": (z,),
        "relu": (h,),
        "relu_backward": (h, g),
        "project_linf": (x_adv, x, 0.1),
        "linf_step": (x_adv, x, d, 0.025, 0.1),
        "interpolate": (p, g, 0.7),
        # in place: params and velocity drift across calls, which is harmless for timing
        "sgd_update": (p.copy(), g, np.zeros(n), 0.01, 0.9, 5e-4),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    if NUMBA_KERNELS is None:
        raise SystemExit("numba is not available; nothing to compare")

    args_by_kernel = cases(args.size, np.random.default_rng(0))
    print(f"{'kernel':<18} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for name, call_args in args_by_kernel.items():
        row = []
        for table in (NUMPY_KERNELS, NUMBA_KERNELS):
            fn = table[name]
            fn(*call_args)  # compile / warm caches
            number = 20
            best = min(timeit.repeat(lambda: fn(*call_args), number=number, repeat=args.repeat))
            row.append(best / number * 1e6)
        print(f"{name:<18} {row[0]:10.1f} {row[1]:10.1f} {row[0] / row[1]:8.2f}x")


if __name__ == "__main__":
    main()
