"""Hot scoring kernels: compiled core with a pure numpy fallback.

The compiled module is optional. Selection happens once at import time;
``SPR_PURE_PYTHON=1`` forces the fallback regardless of availability.
Dense matrix-vector scoring always goes through numpy: BLAS beats a
scalar loop there, so only the gather-style kernels have compiled paths
(see benchmarks/bench_kernels.py for the numbers).

Kernel contracts (all little-endian, C-contiguous inputs):

- ``dot_scores(matrix, query)``: per-row inner products, float32 out.
- ``group_dot(vectors, offsets, lists, query)``: inner products for the
  rows of the selected groups, concatenated in group order.
- ``adc_scan(lut, codes, base)``: ``base + sum_j lut[j, codes[i, j]]``
  per code row.
"""

from __future__ import annotations

import os

from spr.kernels import _py

_force_fallback = os.environ.get("SPR_PURE_PYTHON", "") not in ("", "0")

if _force_fallback:
    _impl = _py
    BACKEND = "python"
else:
    try:
        from spr.kernels import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _py
        BACKEND = "python"

dot_scores = _py.dot_scores
group_dot = _impl.group_dot
adc_scan = _impl.adc_scan

__all__ = ["BACKEND", "dot_scores", "group_dot", "adc_scan"]
