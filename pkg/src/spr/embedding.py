"""Unit-norm embedding tables, frame stores, and the hashing text embedder.

All similarity in the engine is inner product over unit-norm float32
vectors, so cosine similarity and inner product coincide by construction.
"""

from __future__ import annotations

import logging
import math
import re
import struct
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from spr import binio
from spr.corpus import Corpus
from spr.errors import FormatError

logger = logging.getLogger(__name__)

_NORM_WARN_TOLERANCE = 1e-3

FNV64_OFFSET_BASIS = 14695981039346656037
FNV64_PRIME = 1099511628211

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

FRAME_ID_SEPARATOR = "@"


def normalize(vec: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, as float32."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if not math.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return (arr / norm).astype(np.float32)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization of a 2-d array, as float32."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    if not np.isfinite(norms).all() or (norms == 0.0).any():
        raise ValueError("cannot normalize zero or non-finite rows")
    return (arr / norms[:, None]).astype(np.float32)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors of matching dimension."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(av @ bv / (na * nb))


def _fnv1a64(data: bytes) -> int:
    value = FNV64_OFFSET_BASIS
    for byte in data:
        value ^= byte
        value = (value * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return value


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [tok for tok in _TOKEN_SPLIT.split(text.lower()) if tok]


def embed_text_toy(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic hashing embedder for plumbing and synthetic corpora.

    Each token hashes (64-bit FNV-1a over the little-endian seed bytes
    followed by the UTF-8 token bytes) to one coordinate and a sign; the
    signed counts are accumulated in token order and normalized once.
    The result depends only on the token multiset.
    """
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("text produced no tokens")
    seed_bytes = struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    acc = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        digest = _fnv1a64(seed_bytes + token.encode("utf-8"))
        sign = -1.0 if digest >> 63 else 1.0
        acc[digest % dim] += sign
    if not acc.any():
        raise ValueError("token signs cancelled exactly; text has no usable embedding")
    return normalize(acc)


class EmbeddingTable:
    """Immutable id-to-row mapping over a unit-norm float32 matrix."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray, renormalize: bool = True) -> None:
        mat = np.ascontiguousarray(matrix, dtype=np.float32)
        if mat.ndim != 2:
            raise ValueError(f"matrix must be 2-d, got shape {mat.shape}")
        if len(ids) != mat.shape[0]:
            raise ValueError(f"{len(ids)} ids for {mat.shape[0]} rows")
        if mat.shape[1] == 0:
            raise ValueError("embedding dimension must be positive")
        if not np.isfinite(mat).all():
            raise ValueError("matrix contains non-finite values")
        self._ids = tuple(str(i) for i in ids)
        if len(set(self._ids)) != len(self._ids):
            raise ValueError("duplicate ids in embedding table")
        if renormalize and mat.shape[0]:
            norms = np.linalg.norm(mat.astype(np.float64), axis=1)
            if (norms == 0.0).any():
                raise ValueError("matrix contains zero rows")
            drift = np.abs(norms - 1.0)
            if (drift > _NORM_WARN_TOLERANCE).any():
                logger.warning(
                    "renormalized %d embedding rows deviating from unit norm by more than %g",
                    int((drift > _NORM_WARN_TOLERANCE).sum()),
                    _NORM_WARN_TOLERANCE,
                )
            mat = (mat.astype(np.float64) / norms[:, None]).astype(np.float32)
        self._matrix = np.ascontiguousarray(mat)
        self._row_of = {ident: row for row, ident in enumerate(self._ids)}

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

    def __contains__(self, ident: str) -> bool:
        return ident in self._row_of

    def row(self, ident: str) -> int:
        try:
            return self._row_of[ident]
        except KeyError:
            raise KeyError(f"unknown embedding id {ident!r}") from None

    def vector(self, ident: str) -> np.ndarray:
        return self._matrix[self.row(ident)]

    def save(self, matrix_sink: IO[bytes] | str | Path, ids_sink: IO[bytes] | str | Path) -> None:
        binio.write_matrix(matrix_sink, self._matrix)
        binio.write_id_manifest(ids_sink, self._ids)

    @classmethod
    def load(
        cls,
        matrix_source: IO[bytes] | str | Path,
        ids_source: IO[bytes] | str | Path,
    ) -> "EmbeddingTable":
        matrix = binio.read_matrix(matrix_source)
        ids = binio.read_id_manifest(ids_source)
        if len(ids) != matrix.shape[0]:
            raise FormatError(f"id manifest has {len(ids)} rows, matrix has {matrix.shape[0]}")
        return cls(ids, matrix)


def make_frame_id(video_id: str, second: int) -> str:
    return f"{video_id}{FRAME_ID_SEPARATOR}{second}"


class FrameStore:
    """Per-second unit-norm frame embeddings, one row per whole second.

    A video of duration ``d`` holds ``ceil(d)`` frames; frame ``t`` covers
    the half-open second ``[t, t + 1)``.
    """

    def __init__(self, frames: Mapping[str, np.ndarray]) -> None:
        self._frames: dict[str, np.ndarray] = {}
        dim: int | None = None
        for video_id, arr in frames.items():
            mat = np.ascontiguousarray(arr, dtype=np.float32)
            if mat.ndim != 2 or mat.shape[0] == 0:
                raise ValueError(f"frames for {video_id!r} must be a non-empty 2-d array")
            if dim is None:
                dim = int(mat.shape[1])
            elif mat.shape[1] != dim:
                raise ValueError(f"frame dimension mismatch for {video_id!r}")
            self._frames[video_id] = mat
        if dim is None:
            raise ValueError("frame store must contain at least one video")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(self._frames)

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._frames

    def frame_count(self, video_id: str) -> int:
        return int(self.frames_for(video_id).shape[0])

    def frames_for(self, video_id: str) -> np.ndarray:
        try:
            return self._frames[video_id]
        except KeyError:
            raise KeyError(f"no frames for video {video_id!r}") from None

    def slice(self, video_id: str, start_s: float, end_s: float) -> np.ndarray:
        """Frames covering ``[start_s, end_s)``, clipped to the video."""
        if not end_s > start_s:
            raise ValueError(f"empty frame slice [{start_s}, {end_s})")
        frames = self.frames_for(video_id)
        lo = max(int(math.floor(start_s)), 0)
        hi = min(int(math.ceil(end_s)), frames.shape[0])
        if hi <= lo:
            raise ValueError(f"frame slice [{start_s}, {end_s}) lies outside video {video_id!r}")
        return frames[lo:hi]

    def validate_against(self, corpus: Corpus) -> None:
        """Check one-video-one-track coverage: ceil(duration) frames each."""
        for video in corpus:
            expected = math.ceil(video.duration_s)
            if video.video_id not in self._frames:
                raise ValueError(f"missing frames for video {video.video_id!r}")
            got = self._frames[video.video_id].shape[0]
            if got != expected:
                raise ValueError(
                    f"video {video.video_id!r} expects {expected} frames, store has {got}"
                )

    def save(self, matrix_sink: IO[bytes] | str | Path, ids_sink: IO[bytes] | str | Path) -> None:
        mats = [self._frames[v] for v in self._frames]
        ids = [
            make_frame_id(video_id, t)
            for video_id in self._frames
            for t in range(self._frames[video_id].shape[0])
        ]
        binio.write_matrix(matrix_sink, np.vstack(mats))
        binio.write_id_manifest(ids_sink, ids)

    @classmethod
    def load(
        cls,
        matrix_source: IO[bytes] | str | Path,
        ids_source: IO[bytes] | str | Path,
    ) -> "FrameStore":
        matrix = binio.read_matrix(matrix_source)
        ids = binio.read_id_manifest(ids_source)
        if len(ids) != matrix.shape[0]:
            raise FormatError(f"id manifest has {len(ids)} rows, matrix has {matrix.shape[0]}")
        spans: dict[str, list[int]] = {}
        seconds: dict[str, int] = {}
        for row, ident in enumerate(ids):
            video_id, sep, raw_second = ident.rpartition(FRAME_ID_SEPARATOR)
            if not sep or not video_id:
                raise FormatError(f"frame id {ident!r} is not <video_id>{FRAME_ID_SEPARATOR}<second>")
            try:
                second = int(raw_second)
            except ValueError as exc:
                raise FormatError(f"frame id {ident!r} has a non-integer second") from exc
            expected = seconds.get(video_id, 0)
            if second != expected:
                raise FormatError(
                    f"frame id {ident!r}: seconds for {video_id!r} must be contiguous from 0"
                )
            seconds[video_id] = expected + 1
            spans.setdefault(video_id, []).append(row)
        frames = {video_id: matrix[rows[0] : rows[0] + len(rows)] for video_id, rows in spans.items()}
        for video_id, rows in spans.items():
            if rows != list(range(rows[0], rows[0] + len(rows))):
                raise FormatError(f"frames for {video_id!r} are not stored contiguously")
        return cls(frames)


def mil_nce_loss(sim: np.ndarray, positives: Iterable[tuple[int, int]]) -> float:
    """Symmetric batch contrastive loss with multiple positives per anchor.

    ``sim`` is a square query-by-segment similarity matrix and
    ``positives`` the set of (query row, segment column) positive pairs.
    Each direction averages ``-log(sum_pos exp / sum_all exp)`` over its
    anchors and the two directions are averaged. Forward value only.
    """
    mat = np.asarray(sim, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"similarity matrix must be square, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("similarity matrix contains non-finite values")
    b = mat.shape[0]
    if b == 0:
        raise ValueError("similarity matrix must be non-empty")
    mask = np.zeros((b, b), dtype=bool)
    for i, j in positives:
        if not (0 <= i < b and 0 <= j < b):
            raise ValueError(f"positive pair ({i}, {j}) out of range for batch size {b}")
        mask[i, j] = True
    if not mask.any(axis=1).all():
        missing = int(np.flatnonzero(~mask.any(axis=1))[0])
        raise ValueError(f"query row {missing} has no positive pair")
    if not mask.any(axis=0).all():
        missing = int(np.flatnonzero(~mask.any(axis=0))[0])
        raise ValueError(f"segment column {missing} has no positive pair")

    def direction(matrix: np.ndarray, pos: np.ndarray) -> float:
        shift = matrix.max(axis=1, keepdims=True)
        shifted = matrix - shift
        log_all = np.log(np.exp(shifted).sum(axis=1))
        masked = np.where(pos, shifted, -np.inf)
        log_pos = np.log(np.exp(masked).sum(axis=1))
        return float(-(log_pos - log_all).mean())

    loss_q2s = direction(mat, mask)
    loss_s2q = direction(mat.T, mask.T)
    return 0.5 * (loss_q2s + loss_s2q)
