#!/usr/bin/env python3
"""Benchmark the compiled gradient kernels against the NumPy fallback.

The per-sample forward/backward pass dominates simulation runtime, and the
adaptive sensing loop calls it with batch size 1, so both the batched and
the single-sample regimes matter.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import importlib
import time

import numpy as np

from airfedsim import _gradnumpy
from airfedsim.nn import ArchSpec, init_model
from airfedsim import rng as rngmod

try:
    _gradkernels = importlib.import_module("airfedsim._gradkernels")
except ImportError:
    _gradkernels = None


def bench(impl, weights, widths, act_id, loss_id, X, y, repeats):
    start = time.perf_counter()
    for _ in range(repeats):
        impl.per_sample_grads(weights, widths, act_id, loss_id, X, y)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    arch = ArchSpec((16, 24, 5), "relu", "cross_entropy")
    model = init_model(arch, rngmod.stream(42, "init"))
    probe = rngmod.stream(42, "probe")

    print(f"{'batch':>6} {'numpy (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for batch in (1, 4, 32, 256):
        X = probe.standard_normal((batch, 16))
        y = np.ascontiguousarray(probe.integers(0, 5, batch), dtype=np.int64)
        t_np = bench(_gradnumpy, model.weights, arch.widths_array, arch.act_id,
                     arch.loss_id, X, y, args.repeats)
        if _gradkernels is not None:
            t_cy = bench(_gradkernels, model.weights, arch.widths_array,
                         arch.act_id, arch.loss_id, X, y, args.repeats)
            print(f"{batch:>6} {t_np * 1e6:>12.1f} {t_cy * 1e6:>12.1f} "
                  f"{t_np / t_cy:>7.1f}x")
        else:
            print(f"{batch:>6} {t_np * 1e6:>12.1f} {'n/a':>12} {'n/a':>8}")

    if _gradkernels is not None:
        # Parity spot check at float tolerance.
        X = probe.standard_normal((64, 16))
        y = np.ascontiguousarray(probe.integers(0, 5, 64), dtype=np.int64)
        g1, l1 = _gradnumpy.per_sample_grads(model.weights, arch.widths_array,
                                             arch.act_id, arch.loss_id, X, y)
        g2, l2 = _gradkernels.per_sample_grads(model.weights, arch.widths_array,
                                               arch.act_id, arch.loss_id, X, y)
        print(f"max |grad diff| = {np.abs(g1 - g2).max():.3e}, "
              f"max |loss diff| = {np.abs(l1 - l2).max():.3e}")
    else:
        print("compiled backend not available; install with a C compiler to compare")


if __name__ == "__main__":
    main()
