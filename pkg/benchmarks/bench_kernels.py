"""Benchmark the descriptor kernels: numba @njit vs pure numpy.

Renders a batch of synthetic screenshots and times both backends on the
structure and color histograms. The numba path includes an unmeasured
warm-up call so JIT compilation never pollutes the numbers. If numba is not
installed only the numpy path runs.

Run:

    python benchmarks/bench_kernels.py [--n-images 60] [--size 320] [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from setu import kernels
from setu.images import luma
from setu.synthgen import render_layout


def make_images(n_images, size):
    return [render_layout(i, size=size, noise_seed=i) for i in range(n_images)]


def time_backend(fn_structure, fn_color, lumas, rgbs, repeats):
    durations = []
    checksum = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        for lum, rgb in zip(lumas, rgbs):
            checksum += fn_structure(lum).sum()
            checksum += fn_color(rgb).sum()
        durations.append(time.perf_counter() - t0)
    return {
        "mean": statistics.mean(durations),
        "std": statistics.pstdev(durations) if len(durations) > 1 else 0.0,
        "checksum": checksum,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-images", type=int, default=60)
    parser.add_argument("--size", type=int, default=320)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"rendering {args.n_images} synthetic screenshots at {args.size}x{args.size} ...")
    images = make_images(args.n_images, args.size)
    lumas = [np.ascontiguousarray(luma(img)) for img in images]
    rgbs = [np.ascontiguousarray(img) for img in images]

    rows = []
    res_np = time_backend(
        kernels.structure_histogram_numpy, kernels.color_histogram_numpy,
        lumas, rgbs, args.repeats,
    )
    rows.append(("numpy", res_np))

    if kernels._HAVE_NUMBA:
        # warm-up compiles both kernels outside the timed region
        kernels.structure_histogram_numba(lumas[0])
        kernels.color_histogram_numba(rgbs[0])
        res_nb = time_backend(
            kernels.structure_histogram_numba, kernels.color_histogram_numba,
            lumas, rgbs, args.repeats,
        )
        rows.append(("numba", res_nb))
    else:
        print("numba not installed; timing the numpy path only")

    print(f"\n{'backend':10s} {'mean (s)':>10s} {'std (s)':>9s} {'checksum':>16s}")
    print("-" * 50)
    for name, res in rows:
        print(f"{name:10s} {res['mean']:10.4f} {res['std']:9.4f} {res['checksum']:16.4f}")

    if len(rows) == 2:
        drift = abs(rows[0][1]["checksum"] - rows[1][1]["checksum"])
        speedup = rows[0][1]["mean"] / rows[1][1]["mean"] if rows[1][1]["mean"] > 0 else float("inf")
        print(f"\nspeedup (numpy / numba): {speedup:.2f}x")
        print(f"checksum drift between backends: {drift:.3e}")
        print(f"\nactive backend for the library right now: {kernels.active_backend()}")
        print(f"(set {kernels.PURE_NUMPY_ENV}=1 to force the numpy path)")


if __name__ == "__main__":
    main()
