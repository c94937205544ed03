#!/usr/bin/env python3
"""Benchmark the hot kernels on both backends (numba loops vs pure numpy).

Usage:
    python3 benchmarks/bench_kernels.py [--quick] [--dtype float32|float64]

Shapes mirror the first two layers of the 32x32 preset at a modest batch
size. Each cell is the median of repeated runs after a warmup call (which
also absorbs numba's compile time).
"""

import argparse
import time

import numpy as np

from zbcae import _backend, ops


def timeit(fn, repeats):
    fn()  # warmup / JIT compile
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cases(dtype, batch):
    rng = np.random.default_rng(0)

    def t(shape):
        return rng.standard_normal(shape).astype(dtype)

    x1 = t((batch, 3, 32, 32))
    f1 = t((32, 3, 5, 5))
    y1 = t((batch, 32, 28, 28))
    x2 = t((batch, 32, 14, 14))
    f2 = t((48, 32, 5, 5))
    y2 = t((batch, 48, 10, 10))
    act = ops.relu(t((batch, 48, 20, 20)))
    pooled, sw = ops.maxpool(act, 2)

    return [
        ("conv_valid 3->32 @32px", lambda: ops.conv_valid(x1, f1)),
        ("conv_valid 32->48 @14px", lambda: ops.conv_valid(x2, f2)),
        ("conv_full_transpose 32ch", lambda: ops.conv_full_transpose(y1, f1)),
        ("conv_grad_filters 48ch", lambda: ops.conv_grad_filters(x2, y2, f2.shape)),
        ("maxpool p=2", lambda: ops.maxpool(act, 2)),
        ("unpool p=2", lambda: ops.unpool(pooled, sw, 2)),
        ("quadrant_pool", lambda: ops.quadrant_pool(act)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="fewer repeats, smaller batch")
    parser.add_argument("--dtype", default="float32", choices=("float32", "float64"))
    args = parser.parse_args()

    repeats = 3 if args.quick else 9
    batch = 8 if args.quick else 32
    dtype = np.dtype(args.dtype)

    backends = ["numpy"] + (["numba"] if _backend.HAS_NUMBA else [])
    if len(backends) == 1:
        print("numba not importable; timing numpy backend only")

    rows = []
    for name, fn in cases(dtype, batch):
        cell = {}
        for backend in backends:
            with _backend.use_backend(backend):
                cell[backend] = timeit(fn, repeats)
        rows.append((name, cell))

    width = max(len(r[0]) for r in rows)
    header = f"{'kernel':<{width}}  " + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(f"batch={batch} dtype={dtype.name} repeats={repeats} (median)")
    print(header)
    print("-" * len(header))
    for name, cell in rows:
        line = f"{name:<{width}}  " + "".join(f"{1e3 * cell[b]:>14.3f}" for b in backends)
        if len(backends) == 2:
            line += f"{cell['numpy'] / cell['numba']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
