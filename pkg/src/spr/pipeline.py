"""Segment retrieval, proposal generation, refinement, and re-ranking.

The two-stage flow: retrieve the top segments for a query, merge
adjacent retrieved segments per video into coarse proposals ranked by
their best constituent segment, then pad each proposal with temporal
context, refine its boundaries against the per-second similarity
profile, and re-rank by the maximum frame similarity.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np

from spr.corpus import Corpus, Moment, Segment, VideoMeta
from spr.embedding import FrameStore
from spr.errors import FormatError
from spr.index.base import SearchParams, VectorIndex

REFINER_KINDS = ("similarity_profile", "identity")

STAGE_COARSE = "coarse"
STAGE_FINE = "fine"
STAGES = (STAGE_COARSE, STAGE_FINE)


@dataclass(frozen=True)
class RetrievalConfig:
    top_k_segments: int = 200
    nprobe: int = 1

    def __post_init__(self) -> None:
        if self.top_k_segments <= 0:
            raise ValueError(f"top_k_segments must be positive, got {self.top_k_segments}")
        if self.nprobe <= 0:
            raise ValueError(f"nprobe must be positive, got {self.nprobe}")


@dataclass(frozen=True)
class ProposalConfig:
    gap_tolerance_s: float = 0.0

    def __post_init__(self) -> None:
        if self.gap_tolerance_s < 0:
            raise ValueError(f"gap_tolerance_s must be >= 0, got {self.gap_tolerance_s}")


@dataclass(frozen=True)
class RefineConfig:
    context_padding_s: float = 8.0
    profile_alpha: float = 0.7
    kind: str = "similarity_profile"

    def __post_init__(self) -> None:
        if self.context_padding_s < 0:
            raise ValueError(f"context_padding_s must be >= 0, got {self.context_padding_s}")
        if not 0.0 < self.profile_alpha <= 1.0:
            raise ValueError(f"profile_alpha must be in (0, 1], got {self.profile_alpha}")
        if self.kind not in REFINER_KINDS:
            raise ValueError(f"unknown refiner kind {self.kind!r}, expected one of {REFINER_KINDS}")


@dataclass(frozen=True)
class RankedSegment:
    segment: Segment
    rank: int
    score: float


@dataclass(frozen=True)
class Proposal:
    video_id: str
    start_s: float
    end_s: float
    constituent_segment_ids: tuple[str, ...]
    best_segment_rank: int
    best_segment_score: float


@dataclass(frozen=True)
class RankedMoment:
    moment: Moment
    score: float
    rank: int
    stage: str


@dataclass(frozen=True)
class PipelineResult:
    coarse: tuple[RankedMoment, ...]
    fine: tuple[RankedMoment, ...]
    timings_s: Mapping[str, float]


def retrieve_segments(
    query_emb: np.ndarray,
    index: VectorIndex,
    segments: Mapping[str, Segment],
    cfg: RetrievalConfig,
) -> list[RankedSegment]:
    """Top segments for a query, each resolved to its segment record."""
    hits = index.search(query_emb, SearchParams(top_k=cfg.top_k_segments, nprobe=cfg.nprobe))
    out = []
    for rank, hit in enumerate(hits, start=1):
        segment = segments.get(hit.id)
        if segment is None:
            raise KeyError(f"index row {hit.id!r} does not resolve to a known segment")
        out.append(RankedSegment(segment, rank, hit.score))
    return out


def generate_proposals(ranked: Sequence[RankedSegment], cfg: ProposalConfig) -> list[Proposal]:
    """Merge retrieved segments into per-video runs.

    Within a video, segments whose gap to the previous retrieved segment
    is at most the tolerance fuse into one proposal. Proposals are
    ordered by their best (lowest) constituent segment rank.
    """
    by_video: dict[str, list[RankedSegment]] = {}
    for item in ranked:
        by_video.setdefault(item.segment.video_id, []).append(item)
    proposals = []
    for video_id, items in by_video.items():
        items.sort(key=lambda it: it.segment.start_s)
        run: list[RankedSegment] = []
        for item in items:
            if run and item.segment.start_s - run[-1].segment.end_s > cfg.gap_tolerance_s:
                proposals.append(_finish_run(video_id, run))
                run = []
            run.append(item)
        if run:
            proposals.append(_finish_run(video_id, run))
    proposals.sort(key=lambda p: (p.best_segment_rank, -p.best_segment_score, p.video_id, p.start_s))
    return proposals


def _finish_run(video_id: str, run: list[RankedSegment]) -> Proposal:
    best = min(run, key=lambda it: it.rank)
    return Proposal(
        video_id=video_id,
        start_s=run[0].segment.start_s,
        end_s=run[-1].segment.end_s,
        constituent_segment_ids=tuple(it.segment.segment_id for it in run),
        best_segment_rank=best.rank,
        best_segment_score=best.score,
    )


def pad_proposal(proposal: Proposal, video: VideoMeta, context_padding_s: float) -> Proposal:
    """Widen a proposal by the context padding, clamped to the video."""
    if video.video_id != proposal.video_id:
        raise ValueError(f"proposal video {proposal.video_id!r} does not match {video.video_id!r}")
    return Proposal(
        video_id=proposal.video_id,
        start_s=max(0.0, proposal.start_s - context_padding_s),
        end_s=min(video.duration_s, proposal.end_s + context_padding_s),
        constituent_segment_ids=proposal.constituent_segment_ids,
        best_segment_rank=proposal.best_segment_rank,
        best_segment_score=proposal.best_segment_score,
    )


def score_moment(query_emb: np.ndarray, frame_rows: np.ndarray) -> float:
    """Maximum per-frame similarity over the given frame rows."""
    if frame_rows.shape[0] == 0:
        raise ValueError("cannot score a moment with no frames")
    sims = frame_rows @ np.asarray(query_emb, dtype=np.float32)
    return float(sims.max())


def refine_similarity_profile(
    query_emb: np.ndarray,
    padded: Proposal,
    frames: FrameStore,
    alpha: float,
) -> Moment:
    """Tighten a padded proposal around its high-similarity frame run.

    Frame seconds with similarity at or above ``alpha`` times the peak
    survive; the refined interval spans the first through one past the
    last survivor, clamped to the padded proposal. With a non-positive
    peak the threshold degenerates to the peak itself so the argmax
    second always survives.
    """
    lo = int(math.floor(padded.start_s))
    rows = frames.slice(padded.video_id, padded.start_s, padded.end_s)
    sims = rows @ np.asarray(query_emb, dtype=np.float32)
    s_max = float(sims.max())
    theta = min(alpha * s_max, s_max)
    passing = np.flatnonzero(sims >= theta)
    start = float(lo + int(passing[0]))
    end = float(lo + int(passing[-1]) + 1)
    start = max(start, padded.start_s)
    end = min(end, padded.end_s)
    return Moment(padded.video_id, start, end)


def run_pipeline(
    corpus: Corpus,
    index: VectorIndex,
    frames: FrameStore,
    segments: Mapping[str, Segment],
    *,
    query_emb: np.ndarray | None = None,
    query_text: str | None = None,
    embedder: Callable[[str], np.ndarray] | None = None,
    retrieval: RetrievalConfig = RetrievalConfig(),
    proposal: ProposalConfig = ProposalConfig(),
    refine: RefineConfig = RefineConfig(),
) -> PipelineResult:
    """Run both stages for one query and time each phase.

    Exactly one of ``query_emb`` and ``query_text`` must be given; text
    queries require an embedder.
    """
    if (query_emb is None) == (query_text is None):
        raise ValueError("provide exactly one of query_emb and query_text")
    t0 = time.perf_counter()
    if query_text is not None:
        if embedder is None:
            raise ValueError("query_text given but no embedder configured")
        query = np.asarray(embedder(query_text), dtype=np.float32)
    else:
        query = np.asarray(query_emb, dtype=np.float32)
    t1 = time.perf_counter()
    ranked = retrieve_segments(query, index, segments, retrieval)
    t2 = time.perf_counter()
    proposals = generate_proposals(ranked, proposal)
    t3 = time.perf_counter()
    coarse = tuple(
        RankedMoment(Moment(p.video_id, p.start_s, p.end_s), p.best_segment_score, rank, STAGE_COARSE)
        for rank, p in enumerate(proposals, start=1)
    )
    refined: list[tuple[Moment, float]] = []
    for p in proposals:
        padded = pad_proposal(p, corpus.video(p.video_id), refine.context_padding_s)
        rows = frames.slice(padded.video_id, padded.start_s, padded.end_s)
        phi = score_moment(query, rows)
        if refine.kind == "similarity_profile":
            moment = refine_similarity_profile(query, padded, frames, refine.profile_alpha)
        else:
            moment = Moment(p.video_id, p.start_s, p.end_s)
        refined.append((moment, phi))
    order = sorted(
        range(len(refined)),
        key=lambda i: (-refined[i][1], refined[i][0].video_id, refined[i][0].start_s),
    )
    fine = tuple(
        RankedMoment(refined[i][0], refined[i][1], rank, STAGE_FINE)
        for rank, i in enumerate(order, start=1)
    )
    t4 = time.perf_counter()
    timings = {
        "query_embed_s": t1 - t0,
        "segment_retrieval_s": t2 - t1,
        "proposal_generation_s": t3 - t2,
        "refine_rerank_s": t4 - t3,
    }
    return PipelineResult(coarse=coarse, fine=fine, timings_s=timings)


def write_run_file(
    sink: IO[str] | str | Path,
    records: Iterable[tuple[int, str, Sequence[RankedMoment]]],
) -> None:
    """Write prediction records as JSON Lines, one query per line."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_run_file(fh, records)
        return
    for query_id, stage, moments in records:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        line = {
            "query_id": int(query_id),
            "stage": stage,
            "results": [
                {
                    "video_id": rm.moment.video_id,
                    "start_s": rm.moment.start_s,
                    "end_s": rm.moment.end_s,
                    "score": rm.score,
                    "rank": rm.rank,
                }
                for rm in moments
            ],
        }
        sink.write(json.dumps(line) + "\n")


def read_run_file(
    source: IO[str] | str | Path,
    stage: str | None = None,
) -> dict[int, list[Moment]]:
    """Read predictions back as rank-ordered moments per query.

    With ``stage`` set, records for other stages are skipped; otherwise
    each query must appear exactly once in the file.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_run_file(fh, stage)
    out: dict[int, list[Moment]] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"run file line {lineno}: invalid JSON ({exc})") from exc
        try:
            query_id = int(record["query_id"])
            rec_stage = str(record["stage"])
            results = record["results"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"run file line {lineno}: expected query_id, stage, results") from exc
        if rec_stage not in STAGES:
            raise FormatError(f"run file line {lineno}: unknown stage {rec_stage!r}")
        if stage is not None and rec_stage != stage:
            continue
        if query_id in out:
            raise FormatError(f"run file line {lineno}: duplicate records for query {query_id}")
        moments = []
        for pos, item in enumerate(results):
            try:
                rank = int(item["rank"])
                moment = Moment(str(item["video_id"]), float(item["start_s"]), float(item["end_s"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"run file line {lineno} result {pos}: {exc}") from exc
            if rank != pos + 1:
                raise FormatError(f"run file line {lineno}: ranks must be dense from 1")
            moments.append(moment)
        out[query_id] = moments
    return out
