"""Seeded synthetic corpora with planted relevant moments.

Each query gets a latent unit vector derived from its own text through
the hashing embedder. Planted frames mix the latent with a unit noise
direction scaled per relevance grade, so higher grades sit closer to
the query. Distractor videos draw from a separate random stream, so
growing the distractor multiplier leaves the base videos, planted
moments, and query embeddings bit-identical. Everything is a pure
function of the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from spr.corpus import (
    AnnotationSet,
    Corpus,
    GroundTruthMoment,
    Moment,
    QueryAnnotation,
    Segment,
    SegmentationConfig,
    segment_corpus,
)
from spr.embedding import EmbeddingTable, FrameStore, embed_text_toy, normalize

DEFAULT_RELEVANCE_NOISE = {4: 0.05, 3: 0.15, 2: 0.30, 1: 0.50}

_PLACEMENT_ATTEMPTS = 64

# Planted moments span whole seconds in this length range; the upper end
# stays clear of the segment grid so boundaries rarely align with it.
MOMENT_MIN_S = 5
MOMENT_MAX_S = 12


@dataclass(frozen=True)
class SyntheticBenchConfig:
    num_videos: int = 50
    video_duration_s: float = 76.0
    embedding_dim: int = 64
    num_queries: int = 20
    moments_per_query: int = 1
    relevance_noise: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_RELEVANCE_NOISE))
    query_noise: float = 0.05
    distractor_multiplier: int = 0
    segment_length_s: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_videos < 1:
            raise ValueError("num_videos must be >= 1")
        if self.video_duration_s < 2 * MOMENT_MAX_S:
            raise ValueError(f"video_duration_s must be >= {2 * MOMENT_MAX_S} to fit planted moments")
        if self.embedding_dim < 8:
            raise ValueError("embedding_dim must be >= 8")
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")
        if self.moments_per_query < 1:
            raise ValueError("moments_per_query must be >= 1")
        for rel in range(1, 5):
            noise = self.relevance_noise.get(rel)
            if noise is None or noise < 0:
                raise ValueError(f"relevance_noise must map grade {rel} to a non-negative sigma")
        if self.query_noise < 0:
            raise ValueError("query_noise must be >= 0")
        if self.distractor_multiplier < 0:
            raise ValueError("distractor_multiplier must be >= 0")
        if self.segment_length_s <= 0:
            raise ValueError("segment_length_s must be positive")


@dataclass(frozen=True)
class SyntheticBundle:
    config: SyntheticBenchConfig
    corpus: Corpus
    frames: FrameStore
    segments: tuple[Segment, ...]
    segment_table: EmbeddingTable
    annotations: AnnotationSet
    query_table: EmbeddingTable


def query_text_for(query_id: int) -> str:
    return f"planted moment {query_id:04d}"


def _unit_noise(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def _noise_frames(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    block = rng.standard_normal((count, dim))
    block /= np.linalg.norm(block, axis=1)[:, None]
    return block.astype(np.float32)


def _place_moment(
    rng: np.random.Generator,
    occupied: dict[str, list[tuple[int, int]]],
    video_ids: list[str],
    usable_s: int,
) -> tuple[str, int, int]:
    for _ in range(_PLACEMENT_ATTEMPTS):
        video_id = video_ids[int(rng.integers(len(video_ids)))]
        length = int(rng.integers(MOMENT_MIN_S, MOMENT_MAX_S + 1))
        start = int(rng.integers(0, usable_s - length + 1))
        end = start + length
        if all(end <= s or start >= e for s, e in occupied.get(video_id, [])):
            occupied.setdefault(video_id, []).append((start, end))
            return video_id, start, end
    raise RuntimeError("could not place a moment without overlap; corpus too dense for the config")


def _pool_segments(
    frame_store: FrameStore,
    corpus: Corpus,
    segments: tuple[Segment, ...],
    dim: int,
) -> np.ndarray:
    """Direction of the frame mean per segment, computed video by video."""
    rows = np.empty((len(segments), dim), dtype=np.float32)
    pos = 0
    for video in corpus:
        block = frame_store.frames_for(video.video_id).astype(np.float64)
        end = pos
        while end < len(segments) and segments[end].video_id == video.video_id:
            end += 1
        starts = [int(math.floor(seg.start_s)) for seg in segments[pos:end]]
        stops = [min(int(math.ceil(seg.end_s)), block.shape[0]) for seg in segments[pos:end]]
        if all(stops[i] == starts[i + 1] for i in range(len(starts) - 1)) and stops and stops[-1] == block.shape[0]:
            sums = np.add.reduceat(block, starts, axis=0)
        else:
            sums = np.stack([block[a:b].sum(axis=0) for a, b in zip(starts, stops)])
        norms = np.linalg.norm(sums, axis=1)
        if (norms == 0.0).any():
            raise ValueError(f"degenerate segment pooling in video {video.video_id!r}")
        rows[pos:end] = (sums / norms[:, None]).astype(np.float32)
        pos = end
    return rows


def generate_synthetic_corpus(cfg: SyntheticBenchConfig) -> SyntheticBundle:
    """Build a fully materialized corpus, frames, tables, and annotations."""
    rng = np.random.default_rng(cfg.seed)
    rng_distractor = np.random.default_rng([cfg.seed, 1])
    dim = cfg.embedding_dim
    corpus = Corpus()
    base_ids = [f"v{i:04d}" for i in range(cfg.num_videos)]
    for video_id in base_ids:
        corpus.register_video(video_id, cfg.video_duration_s)
    distractor_ids = [f"x{i:05d}" for i in range(cfg.num_videos * cfg.distractor_multiplier)]
    for video_id in distractor_ids:
        corpus.register_video(video_id, cfg.video_duration_s)
    corpus.seal()

    frame_count = math.ceil(cfg.video_duration_s)
    frames: dict[str, np.ndarray] = {}
    for video_id in base_ids:
        frames[video_id] = _noise_frames(rng, frame_count, dim)

    usable = int(math.floor(cfg.video_duration_s))
    occupied: dict[str, list[tuple[int, int]]] = {}
    entries = []
    query_rows = np.empty((cfg.num_queries, dim), dtype=np.float32)
    for qid in range(cfg.num_queries):
        text = query_text_for(qid)
        latent = embed_text_toy(text, dim, cfg.seed).astype(np.float64)
        moments = []
        for j in range(cfg.moments_per_query):
            relevance = 4 - (j % 4)
            sigma = float(cfg.relevance_noise[relevance])
            video_id, start, end = _place_moment(rng, occupied, base_ids, usable)
            block = frames[video_id]
            for t in range(start, end):
                if sigma > 0:
                    block[t] = normalize(latent + sigma * _unit_noise(rng, dim))
                else:
                    block[t] = normalize(latent)
            moments.append(GroundTruthMoment(Moment(video_id, float(start), float(end)), relevance))
        if cfg.query_noise > 0:
            query_rows[qid] = normalize(latent + cfg.query_noise * _unit_noise(rng, dim))
        else:
            query_rows[qid] = normalize(latent)
        entries.append(QueryAnnotation(qid, text, tuple(moments)))

    for video_id in distractor_ids:
        frames[video_id] = _noise_frames(rng_distractor, frame_count, dim)

    frame_store = FrameStore(frames)
    seg_cfg = SegmentationConfig(segment_length_s=cfg.segment_length_s, keep_partial_tail=True)
    segments = tuple(segment_corpus(corpus, seg_cfg))
    seg_rows = _pool_segments(frame_store, corpus, segments, dim)
    segment_table = EmbeddingTable([seg.segment_id for seg in segments], seg_rows, renormalize=False)
    query_table = EmbeddingTable([str(qid) for qid in range(cfg.num_queries)], query_rows, renormalize=False)
    annotations = AnnotationSet(entries)
    return SyntheticBundle(
        config=cfg,
        corpus=corpus,
        frames=frame_store,
        segments=segments,
        segment_table=segment_table,
        annotations=annotations,
        query_table=query_table,
    )
