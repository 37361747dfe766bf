#!/usr/bin/env python3
"""Benchmark the compiled hash kernel against the NumPy fallback.

Builds a synthetic CSR workload shaped like a real machine-week table
(sorted 64-bit domain hashes per row), runs both kernel implementations
over identical inputs, checks the outputs are bit-identical, and prints
throughput for each plus the speedup.

Usage:
    python3 scripts/bench_kernels.py [--rows N] [--mean-domains M]
                                     [--bit-length B] [--repeats R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from flocpriv import kernels
from flocpriv.hashing import seed_key
from flocpriv.simhash import DEFAULT_SEED


def make_workload(rows: int, mean_domains: float, seed: int):
    """Random CSR (values, offsets) with sorted uint64 hashes per row."""
    rng = np.random.default_rng(seed)
    lengths = np.maximum(1, rng.poisson(mean_domains, size=rows)).astype(np.int64)
    offsets = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    values = rng.integers(0, 2**64, size=offsets[-1], dtype=np.uint64)
    for i in range(rows):
        lo, hi = offsets[i], offsets[i + 1]
        values[lo:hi] = np.sort(values[lo:hi])
    return values, offsets


def time_impl(impl: str, values, offsets, bit_length: int, key: int, repeats: int):
    """Best-of-N wall time and the (identical every run) output array."""
    out = None
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = kernels.simhash_rows(values, offsets, bit_length, key, impl=impl)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--mean-domains", type=float, default=12.0)
    ap.add_argument("--bit-length", type=int, default=50)
    ap.add_argument("--hash-seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--workload-seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    try:
        from flocpriv import _simhash_cy  # noqa: F401
    except ImportError:
        print("compiled kernel not available (install without FLOCPRIV_PURE_PYTHON); nothing to compare")
        return 1

    values, offsets = make_workload(args.rows, args.mean_domains, args.workload_seed)
    key = seed_key(args.hash_seed)
    n_values = int(offsets[-1])
    print(
        f"workload: {args.rows} rows, {n_values} domain hashes "
        f"(mean {n_values / args.rows:.1f}/row), bit_length={args.bit_length}"
    )
    print(f"module default kernel: {kernels.KERNEL_NAME}")

    # Warm up both paths once so timing excludes first-call overhead.
    warm_v, warm_o = values[: offsets[8]], offsets[:9]
    kernels.simhash_rows(warm_v, warm_o, args.bit_length, key, impl="python")
    kernels.simhash_rows(warm_v, warm_o, args.bit_length, key, impl="compiled")

    t_py, out_py = time_impl("python", values, offsets, args.bit_length, key, args.repeats)
    t_cy, out_cy = time_impl("compiled", values, offsets, args.bit_length, key, args.repeats)

    if not np.array_equal(out_py, out_cy):
        print("FAIL: kernel outputs differ")
        return 1
    print("outputs bit-identical: yes")

    for name, t in (("numpy-fallback", t_py), ("compiled", t_cy)):
        print(
            f"{name:>15}: {t * 1e3:8.1f} ms  "
            f"{args.rows / t:12,.0f} rows/s  {n_values / t:14,.0f} hashes/s"
        )
    print(f"speedup (compiled vs numpy-fallback): {t_py / t_cy:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
