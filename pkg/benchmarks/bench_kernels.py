"""Compare the compiled scoring kernels against the pure-Python fallback.

Run as a script:

    python3 benchmarks/bench_kernels.py [--rows 200000] [--dim 64] [--reps 5]

Prints one line per kernel with both timings and the speedup factor.
The numbers also double as a sanity check that the two backends agree.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from spr.kernels import _py

try:
    from spr.kernels import _core
except ImportError:
    _core = None


def _bench(fn, *args, reps: int) -> tuple[float, np.ndarray]:
    fn(*args)  # warm up caches and lazy allocations
    best = float("inf")
    out = None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--lists", type=int, default=256)
    parser.add_argument("--m", type=int, default=16)
    args = parser.parse_args(argv)

    if _core is None:
        print("compiled extension not available; showing fallback timings only")

    rng = np.random.default_rng(7)
    matrix = rng.standard_normal((args.rows, args.dim)).astype(np.float32)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    query = matrix[0].copy()

    assignments = rng.integers(0, args.lists, size=args.rows)
    order = np.argsort(assignments, kind="stable")
    grouped = np.ascontiguousarray(matrix[order])
    counts = np.bincount(assignments, minlength=args.lists)
    offsets = np.zeros(args.lists + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    probe = np.arange(0, args.lists, 4, dtype=np.int64)

    ksub = 256
    lut = rng.standard_normal((args.m, ksub)).astype(np.float32)
    codes = rng.integers(0, ksub, size=(args.rows, args.m), dtype=np.uint8)

    cases = [
        ("dot_scores", (matrix, query)),
        ("group_dot", (grouped, offsets, probe, query)),
        ("adc_scan", (lut, codes, 0.25)),
    ]
    for name, case_args in cases:
        py_time, py_out = _bench(getattr(_py, name), *case_args, reps=args.reps)
        if _core is None:
            print(f"{name:12s} python={py_time * 1e3:8.2f} ms")
            continue
        c_time, c_out = _bench(getattr(_core, name), *case_args, reps=args.reps)
        if not np.allclose(py_out, c_out, atol=1e-5):
            print(f"{name:12s} BACKEND MISMATCH", file=sys.stderr)
            return 1
        print(
            f"{name:12s} python={py_time * 1e3:8.2f} ms  "
            f"compiled={c_time * 1e3:8.2f} ms  speedup={py_time / c_time:5.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
