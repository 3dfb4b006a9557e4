"""Graded ranking metrics over temporal IoU matching, plus oracle bounds.

The headline metric is NDCG@K restricted to predictions that match a
ground-truth moment at IoU at or above a threshold. Matching is greedy
in prediction-rank order and each ground-truth moment can be claimed at
most once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from spr.corpus import AnnotationSet, Corpus, GroundTruthMoment, Moment, Segment, segment_overlap_fraction
from spr.pipeline import Proposal, read_run_file

DEFAULT_CUTOFFS = (10, 20, 40)
DEFAULT_IOU_THRESHOLDS = (0.3, 0.5, 0.7)


@dataclass(frozen=True)
class EvalConfig:
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS

    def __post_init__(self) -> None:
        if not self.cutoffs or any(k <= 0 for k in self.cutoffs):
            raise ValueError(f"cutoffs must be positive, got {self.cutoffs}")
        if not self.iou_thresholds or any(not 0 < t <= 1 for t in self.iou_thresholds):
            raise ValueError(f"iou thresholds must lie in (0, 1], got {self.iou_thresholds}")


@dataclass(frozen=True)
class MatchEntry:
    """Per-prediction outcome: claimed relevance and the matched GT index."""

    relevance: int
    gt_index: int | None


def iou(a: Moment, b: Moment) -> float:
    """Temporal intersection-over-union; zero across different videos."""
    if a.video_id != b.video_id:
        return 0.0
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter <= 0:
        return 0.0
    union = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    return inter / union


def match_predictions(
    predictions: Sequence[Moment],
    gts: Sequence[GroundTruthMoment],
    iou_threshold: float,
) -> list[MatchEntry]:
    """Greedy one-to-one matching in prediction-rank order.

    Each prediction claims the unmatched ground truth with IoU at or
    above the threshold that has the highest relevance; ties prefer the
    larger IoU, then the earlier moment start, then the lower index.
    """
    taken = [False] * len(gts)
    out = []
    for pred in predictions:
        best: tuple[float, float, float, int] | None = None
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            overlap = iou(pred, gt.moment)
            if overlap < iou_threshold:
                continue
            key = (-float(gt.relevance), -overlap, gt.moment.start_s, gi)
            if best is None or key < best:
                best = key
        if best is None:
            out.append(MatchEntry(0, None))
        else:
            gi = best[3]
            taken[gi] = True
            out.append(MatchEntry(gts[gi].relevance, gi))
    return out


def dcg_at_k(relevances: Sequence[int], k: int) -> float:
    """Graded gain discounted by log2 rank position."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    total = 0.0
    for pos, rel in enumerate(relevances[: min(k, len(relevances))], start=1):
        total += (2.0**rel - 1.0) / math.log2(pos + 1)
    return total


def ideal_dcg_at_k(gts: Sequence[GroundTruthMoment], k: int) -> float:
    rels = sorted((gt.relevance for gt in gts), reverse=True)
    return dcg_at_k(rels, k)


def ndcg_at_k(
    predictions: Sequence[Moment],
    gts: Sequence[GroundTruthMoment],
    k: int,
    iou_threshold: float,
) -> float:
    """NDCG@K over IoU-matched relevance; queries without GT score 0."""
    if not gts:
        return 0.0
    matches = match_predictions(predictions, gts, iou_threshold)
    gained = dcg_at_k([m.relevance for m in matches], k)
    ideal = ideal_dcg_at_k(gts, k)
    return gained / ideal if ideal > 0 else 0.0


@dataclass
class EvalReport:
    """Mean NDCG per (cutoff, IoU threshold) cell plus per-query detail."""

    num_queries: int
    cells: list[dict] = field(default_factory=list)
    per_query: list[dict] = field(default_factory=list)

    def cell(self, k: int, iou_threshold: float) -> float:
        for entry in self.cells:
            if entry["K"] == k and entry["iou"] == iou_threshold:
                return entry["ndcg"]
        raise KeyError(f"no cell for K={k}, iou={iou_threshold}")

    def to_json(self, sink: IO[str] | str | Path | None = None) -> str:
        doc = {"num_queries": self.num_queries, "cells": self.cells, "per_query": self.per_query}
        text = json.dumps(doc, indent=2)
        if sink is not None:
            if isinstance(sink, (str, Path)):
                with open(sink, "w", encoding="utf-8") as fh:
                    fh.write(text + "\n")
            else:
                sink.write(text + "\n")
        return text


def evaluate_predictions(
    predictions_by_query: Mapping[int, Sequence[Moment]],
    annotations: AnnotationSet,
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Mean NDCG grid over every annotated query.

    Queries missing from the predictions contribute zero to every cell;
    predictions for unknown queries are an error.
    """
    unknown = set(predictions_by_query) - set(annotations.query_ids)
    if unknown:
        raise KeyError(f"predictions reference unknown query ids {sorted(unknown)}")
    report = EvalReport(num_queries=len(annotations))
    sums = {(k, t): 0.0 for k in cfg.cutoffs for t in cfg.iou_thresholds}
    for entry in annotations:
        preds = list(predictions_by_query.get(entry.query_id, ()))
        row = {"query_id": entry.query_id, "cells": []}
        for k in cfg.cutoffs:
            for t in cfg.iou_thresholds:
                value = ndcg_at_k(preds, entry.moments, k, t)
                sums[(k, t)] += value
                row["cells"].append({"K": k, "iou": t, "ndcg": value})
        report.per_query.append(row)
    n = max(len(annotations), 1)
    for k in cfg.cutoffs:
        for t in cfg.iou_thresholds:
            report.cells.append({"K": k, "iou": t, "ndcg": sums[(k, t)] / n})
    return report


def evaluate_run(
    run_source: IO[str] | str | Path,
    annotations: AnnotationSet,
    cfg: EvalConfig = EvalConfig(),
    stage: str | None = None,
) -> EvalReport:
    """Evaluate a prediction run file against the annotation set."""
    predictions = read_run_file(run_source, stage)
    return evaluate_predictions(predictions, annotations, cfg)


def _padded(proposal: Proposal, corpus: Corpus, context_padding_s: float) -> tuple[float, float]:
    duration = corpus.video(proposal.video_id).duration_s
    return (
        max(0.0, proposal.start_s - context_padding_s),
        min(duration, proposal.end_s + context_padding_s),
    )


def upper_bound_ndcg(
    proposals_by_query: Mapping[int, Sequence[Proposal]],
    annotations: AnnotationSet,
    corpus: Corpus,
    k: int,
    context_padding_s: float = 8.0,
) -> float:
    """NDCG of a perfect refiner and ranker over the padded proposals.

    Every ground truth that overlaps any padded proposal is recovered
    exactly and ranked by relevance, so the value does not depend on the
    IoU threshold.
    """
    total = 0.0
    for entry in annotations:
        if not entry.moments:
            continue
        proposals = proposals_by_query.get(entry.query_id, ())
        recovered = []
        for gt in entry.moments:
            for proposal in proposals:
                if proposal.video_id != gt.moment.video_id:
                    continue
                lo, hi = _padded(proposal, corpus, context_padding_s)
                if min(hi, gt.moment.end_s) - max(lo, gt.moment.start_s) > 0:
                    recovered.append(gt.relevance)
                    break
        recovered.sort(reverse=True)
        ideal = ideal_dcg_at_k(entry.moments, k)
        total += dcg_at_k(recovered, k) / ideal if ideal > 0 else 0.0
    return total / max(len(annotations), 1)


def _best_grid_iou(
    gt: Moment,
    window: tuple[float, float],
    scale: float,
) -> float:
    """Best achievable IoU with boundaries on the absolute grid inside a window.

    Exhaustive over all grid-aligned intervals in the window; the small
    epsilon keeps boundaries that land exactly on the grid inside it.
    """
    lo, hi = window
    first = math.ceil(lo / scale - 1e-9)
    last = math.floor(hi / scale + 1e-9)
    if last - first < 1:
        return 0.0
    points = np.arange(first, last + 1, dtype=np.float64) * scale
    best = 0.0
    for row_lo in range(0, len(points) - 1, 512):
        starts = points[row_lo : min(row_lo + 512, len(points) - 1), None]
        ends = points[None, :]
        inter = np.minimum(ends, gt.end_s) - np.maximum(starts, gt.start_s)
        union = np.maximum(ends, gt.end_s) - np.minimum(starts, gt.start_s)
        valid = (ends > starts) & (inter > 0)
        if valid.any():
            ratios = np.where(valid, inter / np.maximum(union, 1e-300), 0.0)
            best = max(best, float(ratios.max()))
    return best


def practical_upper_bound_ndcg(
    proposals_by_query: Mapping[int, Sequence[Proposal]],
    annotations: AnnotationSet,
    corpus: Corpus,
    k: int,
    iou_threshold: float,
    min_time_scale: float,
    context_padding_s: float = 8.0,
) -> float:
    """Upper bound when boundaries snap to the model's time granularity.

    Candidate intervals must start and end on multiples of the scale
    (anchored at video time zero) inside a padded proposal; each ground
    truth keeps its best candidate and contributes only if that IoU
    clears the threshold. Candidates rank by relevance, then IoU.
    """
    if min_time_scale <= 0:
        raise ValueError(f"min_time_scale must be positive, got {min_time_scale}")
    total = 0.0
    for entry in annotations:
        if not entry.moments:
            continue
        proposals = proposals_by_query.get(entry.query_id, ())
        candidates = []
        for gt in entry.moments:
            best = 0.0
            for proposal in proposals:
                if proposal.video_id != gt.moment.video_id:
                    continue
                window = _padded(proposal, corpus, context_padding_s)
                if min(window[1], gt.moment.end_s) - max(window[0], gt.moment.start_s) <= 0:
                    continue
                best = max(best, _best_grid_iou(gt.moment, window, min_time_scale))
            if best >= iou_threshold:
                candidates.append((gt.relevance, best))
        candidates.sort(key=lambda c: (-c[0], -c[1]))
        ideal = ideal_dcg_at_k(entry.moments, k)
        gained = dcg_at_k([rel for rel, _ in candidates], k)
        total += gained / ideal if ideal > 0 else 0.0
    return total / max(len(annotations), 1)


def segment_recall(
    retrieved_by_query: Mapping[int, Sequence[Segment]],
    annotations: AnnotationSet,
    overlap_threshold: float = 0.5,
) -> float:
    """Fraction of ground truths reached by at least one retrieved segment."""
    covered = 0
    total = 0
    for entry in annotations:
        segments = retrieved_by_query.get(entry.query_id, ())
        for gt in entry.moments:
            total += 1
            if any(segment_overlap_fraction(seg, gt.moment) >= overlap_threshold for seg in segments):
                covered += 1
    return covered / total if total else 0.0
