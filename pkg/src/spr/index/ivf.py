"""Inverted-file index: coarse codebook plus per-list exact rescoring.

Rows are assigned to their nearest coarse centroid by inner product (the
corpus is unit-norm, centroids are not) and stored grouped by list so a
probe scans contiguous memory.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from spr import kernels
from spr.embedding import EmbeddingTable
from spr.index.base import Hit, SearchParams, check_query, top_hits, top_rows
from spr.index.kmeans import Codebook, KMeansConfig, kmeans

NLIST_MIN = 4
NLIST_MAX = 8192


def default_nlist(count: int) -> int:
    """Square-root rule clamped to a sane range."""
    return max(NLIST_MIN, min(NLIST_MAX, int(math.isqrt(count))))


def assign_inner_product(matrix: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row by inner product, ties to lowest id."""
    scores = matrix.astype(np.float64) @ centroids.astype(np.float64).T
    return scores.argmax(axis=1).astype(np.int64)


class IVFIndex:
    kind = "ivf"

    def __init__(
        self,
        ids: tuple[str, ...],
        matrix: np.ndarray,
        codebook: Codebook,
        assignments: np.ndarray,
    ) -> None:
        if matrix.shape[0] == 0:
            raise ValueError("cannot build an index over zero rows")
        if assignments.shape[0] != matrix.shape[0]:
            raise ValueError("one assignment per row required")
        self._ids = ids
        self._matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self._codebook = codebook
        self._assignments = np.asarray(assignments, dtype=np.int64)
        order = np.argsort(self._assignments, kind="stable")
        self._grouped = np.ascontiguousarray(self._matrix[order])
        self._grouped_rows = order
        counts = np.bincount(self._assignments, minlength=codebook.k)
        self._offsets = np.zeros(codebook.k + 1, dtype=np.int64)
        np.cumsum(counts, out=self._offsets[1:])

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def codebook(self) -> Codebook:
        return self._codebook

    @property
    def assignments(self) -> np.ndarray:
        return self._assignments

    @property
    def nlist(self) -> int:
        return self._codebook.k

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    def __len__(self) -> int:
        return int(self._matrix.shape[0])

    def list_sizes(self) -> np.ndarray:
        return np.diff(self._offsets)

    def probe_order(self, query: np.ndarray, nprobe: int) -> list[int]:
        """The nprobe nearest coarse lists by inner product."""
        q = check_query(query, self.dim)
        centroid_scores = kernels.dot_scores(
            np.ascontiguousarray(self._codebook.centroids), q
        )
        return top_rows(centroid_scores, min(nprobe, self.nlist))

    def search(self, query: np.ndarray, params: SearchParams) -> list[Hit]:
        q = check_query(query, self.dim)
        probes = np.asarray(self.probe_order(q, params.nprobe), dtype=np.int64)
        scores = kernels.group_dot(self._grouped, self._offsets, probes, q)
        rows = np.concatenate(
            [self._grouped_rows[self._offsets[g] : self._offsets[g + 1]] for g in probes]
        ) if probes.size else np.zeros(0, dtype=np.int64)
        candidate_ids = [self._ids[r] for r in rows]
        return top_hits(scores, candidate_ids, params.top_k)


def build_ivf(table: EmbeddingTable, nlist: int | None, km: KMeansConfig | None = None) -> IVFIndex:
    if len(table) == 0:
        raise ValueError("cannot build an index over zero rows")
    if nlist is None:
        nlist = default_nlist(len(table))
    if nlist < 1 or nlist > len(table):
        raise ValueError(f"nlist={nlist} must be in [1, {len(table)}]")
    base = km if km is not None else KMeansConfig(k=nlist)
    codebook = kmeans(table.matrix, replace(base, k=nlist))
    assignments = assign_inner_product(table.matrix, codebook.centroids)
    return IVFIndex(table.ids, table.matrix, codebook, assignments)
