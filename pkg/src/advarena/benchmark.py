"""Timing comparison of the two kernel backends.

Run as ``python3 -m advarena.benchmark [--repeats N]``.  Imports both
kernel modules directly (ignoring ADVARENA_BACKEND), warms up the
compiled one so JIT cost is not billed to the measurement, then times
each kernel on shapes matching real workloads (32x32 RGB through the
zoo's convolution stack).  Convolution rows compare the compiled loop
variants (``*_jit``) against im2col + matmul; the loops lose at wide
channel counts, which is why the compiled backend only swaps in the
spatial kernels.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import _kernels_numpy
from .rng import Rng


def _workloads():
    rng = Rng(2024)
    x = rng.uniform_array((3, 32, 32))
    k_a = rng.uniform_array((8, 3, 3, 3), -0.1, 0.1)
    feat = rng.uniform_array((8, 16, 16))
    up = rng.uniform_array((8, 16, 16), -0.1, 0.1)
    theta = np.array([1.02, 0.03, 0.4, -0.02, 0.99, -0.3, 5e-4, -3e-4])
    k_b = rng.uniform_array((32, 16, 3, 3), -0.1, 0.1)
    mid = rng.uniform_array((16, 16, 16))
    return [
        ("conv2d_forward 3->8", "conv2d_forward", "conv2d_forward_jit",
         (x, k_a, 2, 1)),
        ("conv2d_forward 16->32", "conv2d_forward", "conv2d_forward_jit",
         (mid, k_b, 1, 1)),
        ("conv2d_backward_input", "conv2d_backward_input",
         "conv2d_backward_input_jit", (k_a, up, 3, 32, 32, 2, 1)),
        ("conv2d_backward_kernels", "conv2d_backward_kernels",
         "conv2d_backward_kernels_jit", (x, up, 3, 2, 1)),
        ("resize_forward", "resize_forward", "resize_forward", (feat, 28, 28)),
        ("resize_backward", "resize_backward", "resize_backward", (up, 24, 24)),
        ("warp_forward", "warp_forward", "warp_forward", (x, theta)),
        ("warp_backward", "warp_backward", "warp_backward", (x, theta, 32, 32)),
        ("median_filter_2x2", "median_filter_2x2", "median_filter_2x2", (x,)),
    ]


def _time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="advarena.benchmark",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30,
                        help="timing repeats per kernel (best-of)")
    args = parser.parse_args(argv)

    try:
        from . import _kernels_numba
    except ImportError:
        print("numba backend unavailable; nothing to compare", file=sys.stderr)
        return 1

    loads = _workloads()
    for label, np_name, nb_name, call_args in loads:   # warm up JIT compilation
        getattr(_kernels_numba, nb_name)(*call_args)

    print(f"{'kernel':<26} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, np_name, nb_name, call_args in loads:
        t_np = _time(getattr(_kernels_numpy, np_name), call_args, args.repeats)
        t_nb = _time(getattr(_kernels_numba, nb_name), call_args, args.repeats)
        ratio = t_np / t_nb if t_nb > 0 else float("inf")
        print(f"{label:<26} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{ratio:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
