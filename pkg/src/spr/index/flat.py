"""Exact inner-product index: one full scan per query."""

from __future__ import annotations

import numpy as np

from spr import kernels
from spr.embedding import EmbeddingTable
from spr.index.base import Hit, SearchParams, check_query, top_hits


class FlatIndex:
    kind = "flat"

    def __init__(self, ids: tuple[str, ...], matrix: np.ndarray) -> None:
        if matrix.shape[0] == 0:
            raise ValueError("cannot build an index over zero rows")
        self._ids = ids
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float32)

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    def __len__(self) -> int:
        return int(self._matrix.shape[0])

    def search(self, query: np.ndarray, params: SearchParams) -> list[Hit]:
        q = check_query(query, self.dim)
        scores = kernels.dot_scores(self._matrix, q)
        return top_hits(scores, self._ids, params.top_k)


def build_flat(table: EmbeddingTable) -> FlatIndex:
    return FlatIndex(table.ids, table.matrix)
