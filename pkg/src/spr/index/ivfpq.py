"""Inverted-file index with product-quantized residuals.

Each row stores an m-byte code over per-sub-space codebooks trained on
residuals from the coarse centroid. Queries score codes through an
asymmetric-distance lookup table, so only ``m`` table reads and adds are
spent per candidate.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from spr import kernels
from spr.embedding import EmbeddingTable
from spr.index.base import Hit, SearchParams, check_query, top_hits, top_rows
from spr.index.ivf import assign_inner_product, default_nlist
from spr.index.kmeans import Codebook, KMeansConfig, assign_euclidean, kmeans

NBITS_MAX = 8


class IVFPQIndex:
    kind = "ivfpq"

    def __init__(
        self,
        ids: tuple[str, ...],
        dim: int,
        codebook: Codebook,
        assignments: np.ndarray,
        sub_codebooks: np.ndarray,
        codes: np.ndarray,
    ) -> None:
        if len(ids) == 0:
            raise ValueError("cannot build an index over zero rows")
        m, ksub, dsub = sub_codebooks.shape
        if m * dsub != dim:
            raise ValueError(f"sub-codebooks cover {m * dsub} dims, index holds {dim}")
        if codes.shape != (len(ids), m):
            raise ValueError(f"codes shape {codes.shape} does not match ({len(ids)}, {m})")
        self._ids = ids
        self._dim = dim
        self._codebook = codebook
        self._assignments = np.asarray(assignments, dtype=np.int64)
        self._sub_codebooks = np.ascontiguousarray(sub_codebooks, dtype=np.float32)
        self._codes = np.ascontiguousarray(codes, dtype=np.uint8)
        order = np.argsort(self._assignments, kind="stable")
        self._grouped_codes = np.ascontiguousarray(self._codes[order])
        self._grouped_rows = order
        counts = np.bincount(self._assignments, minlength=codebook.k)
        self._offsets = np.zeros(codebook.k + 1, dtype=np.int64)
        np.cumsum(counts, out=self._offsets[1:])

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def codebook(self) -> Codebook:
        return self._codebook

    @property
    def assignments(self) -> np.ndarray:
        return self._assignments

    @property
    def sub_codebooks(self) -> np.ndarray:
        return self._sub_codebooks

    @property
    def codes(self) -> np.ndarray:
        return self._codes

    @property
    def nlist(self) -> int:
        return self._codebook.k

    @property
    def m(self) -> int:
        return int(self._sub_codebooks.shape[0])

    @property
    def ksub(self) -> int:
        return int(self._sub_codebooks.shape[1])

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._ids)

    def adc_table(self, query: np.ndarray) -> np.ndarray:
        """Per-sub-space lookup table of query-to-centroid inner products."""
        q = check_query(query, self._dim)
        m, ksub, dsub = self._sub_codebooks.shape
        q_subs = q.reshape(m, dsub)
        table = np.einsum("mkd,md->mk", self._sub_codebooks.astype(np.float64), q_subs.astype(np.float64))
        return np.ascontiguousarray(table, dtype=np.float32)

    def coarse_scores(self, query: np.ndarray) -> np.ndarray:
        q = check_query(query, self._dim)
        return kernels.dot_scores(np.ascontiguousarray(self._codebook.centroids), q)

    def probe_order(self, query: np.ndarray, nprobe: int) -> list[int]:
        scores = self.coarse_scores(query)
        return top_rows(scores, min(nprobe, self.nlist))

    def search(self, query: np.ndarray, params: SearchParams) -> list[Hit]:
        q = check_query(query, self._dim)
        coarse = self.coarse_scores(q)
        probes = self.probe_order(q, params.nprobe)
        lut = self.adc_table(q)
        score_parts = []
        row_parts = []
        for g in probes:
            lo, hi = int(self._offsets[g]), int(self._offsets[g + 1])
            if hi == lo:
                continue
            score_parts.append(kernels.adc_scan(lut, self._grouped_codes[lo:hi], float(coarse[g])))
            row_parts.append(self._grouped_rows[lo:hi])
        if not score_parts:
            return []
        scores = np.concatenate(score_parts)
        rows = np.concatenate(row_parts)
        candidate_ids = [self._ids[r] for r in rows]
        return top_hits(scores, candidate_ids, params.top_k)


def pq_adc_table(query: np.ndarray, index: IVFPQIndex, list_id: int) -> tuple[float, np.ndarray]:
    """Coarse term and lookup table for scoring one probed list.

    The score of a code in the list is the coarse term plus the sum over
    sub-spaces of the table entry at that sub-space's code byte.
    """
    if not 0 <= list_id < index.nlist:
        raise ValueError(f"list_id {list_id} out of range for {index.nlist} lists")
    coarse = float(index.coarse_scores(query)[list_id])
    return coarse, index.adc_table(query)


def build_ivfpq(
    table: EmbeddingTable,
    nlist: int | None,
    m: int,
    nbits: int,
    km: KMeansConfig | None = None,
) -> IVFPQIndex:
    count, dim = len(table), table.dim
    if count == 0:
        raise ValueError("cannot build an index over zero rows")
    if nlist is None:
        nlist = default_nlist(count)
    if m < 1 or dim % m != 0:
        raise ValueError(f"m={m} must divide the dimension {dim}")
    if not 1 <= nbits <= NBITS_MAX:
        raise ValueError(f"nbits={nbits} must be in [1, {NBITS_MAX}]")
    ksub = 1 << nbits
    if count < max(nlist, ksub):
        raise ValueError(f"need at least max(nlist, 2^nbits) = {max(nlist, ksub)} rows, got {count}")
    base = km if km is not None else KMeansConfig(k=nlist)
    codebook = kmeans(table.matrix, replace(base, k=nlist))
    assignments = assign_inner_product(table.matrix, codebook.centroids)
    residuals = table.matrix.astype(np.float64) - codebook.centroids.astype(np.float64)[assignments]
    dsub = dim // m
    sub_codebooks = np.empty((m, ksub, dsub), dtype=np.float32)
    codes = np.empty((count, m), dtype=np.uint8)
    for j in range(m):
        sub = residuals[:, j * dsub : (j + 1) * dsub]
        sub_book = kmeans(sub, replace(base, k=ksub, seed=base.seed + j + 1))
        sub_codebooks[j] = sub_book.centroids
        sub_assign, _ = assign_euclidean(sub, sub_book.centroids)
        codes[:, j] = sub_assign.astype(np.uint8)
    return IVFPQIndex(table.ids, dim, codebook, assignments, sub_codebooks, codes)
