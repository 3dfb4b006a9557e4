"""Numpy fallback implementations of the scoring kernels."""

from __future__ import annotations

import numpy as np


def dot_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    return np.asarray(matrix @ query, dtype=np.float32)


def group_dot(
    vectors: np.ndarray,
    offsets: np.ndarray,
    lists: np.ndarray,
    query: np.ndarray,
) -> np.ndarray:
    parts = [vectors[offsets[g] : offsets[g + 1]] for g in lists]
    if not parts:
        return np.zeros(0, dtype=np.float32)
    stacked = np.vstack(parts)
    return np.asarray(stacked @ query, dtype=np.float32)


def adc_scan(lut: np.ndarray, codes: np.ndarray, base: float) -> np.ndarray:
    if codes.shape[0] == 0:
        return np.zeros(0, dtype=np.float32)
    m = lut.shape[0]
    gathered = lut[np.arange(m)[None, :], codes]
    return (gathered.sum(axis=1, dtype=np.float64) + base).astype(np.float32)
