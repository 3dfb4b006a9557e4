"""Shared index types and the deterministic top-k selection rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np


@dataclass(frozen=True)
class SearchParams:
    top_k: int
    nprobe: int = 1

    def __post_init__(self) -> None:
        if self.top_k <= 0:
            raise ValueError(f"top_k must be positive, got {self.top_k}")
        if self.nprobe <= 0:
            raise ValueError(f"nprobe must be positive, got {self.nprobe}")


@dataclass(frozen=True)
class Hit:
    id: str
    score: float


class VectorIndex(Protocol):
    kind: str

    @property
    def dim(self) -> int: ...

    def __len__(self) -> int: ...

    def search(self, query: np.ndarray, params: SearchParams) -> list[Hit]: ...


def check_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != dim:
        raise ValueError(f"query shape {q.shape} does not match index dimension {dim}")
    if not np.isfinite(q).all():
        raise ValueError("query contains non-finite values")
    return q


def top_hits(scores: np.ndarray, row_ids: Sequence[str], k: int) -> list[Hit]:
    """Top-k by score descending, ties broken by ascending id.

    Ties at the cutoff are resolved by the same rule, so the selected set
    is a pure function of (scores, ids, k).
    """
    n = int(scores.shape[0])
    if n == 0 or k <= 0:
        return []
    k = min(k, n)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    ordered = sorted(cand.tolist(), key=lambda r: (-float(scores[r]), row_ids[r]))
    return [Hit(row_ids[r], float(scores[r])) for r in ordered[:k]]


def top_rows(scores: np.ndarray, k: int) -> list[int]:
    """Top-k row indices by score descending, ties by ascending row."""
    n = int(scores.shape[0])
    if n == 0 or k <= 0:
        return []
    k = min(k, n)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    ordered = sorted(cand.tolist(), key=lambda r: (-float(scores[r]), r))
    return ordered[:k]
