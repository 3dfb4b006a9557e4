"""Scalability and retrieval-depth sweeps over synthetic corpora.

Two harnesses: a latency/quality table across corpus size multiples and
index kinds, and a retrieval-depth sweep reporting the NDCG grid for a
range of top-k settings in a single run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Sequence

from spr.engine import IndexBuildConfig, build_index_from_table
from spr.evaluation import EvalConfig, evaluate_predictions
from spr.pipeline import (
    ProposalConfig,
    RefineConfig,
    RetrievalConfig,
    run_pipeline,
)
from spr.synth import SyntheticBenchConfig, SyntheticBundle, generate_synthetic_corpus


@dataclass(frozen=True)
class BenchResult:
    rows: tuple[dict, ...]

    def to_jsonl(self, sink: IO[str] | str | Path | None = None) -> str:
        lines = "\n".join(json.dumps(row) for row in self.rows) + "\n"
        if sink is not None:
            if isinstance(sink, (str, Path)):
                with open(sink, "w", encoding="utf-8") as fh:
                    fh.write(lines)
            else:
                sink.write(lines)
        return lines


def _bundle_for_size(base: SyntheticBenchConfig, size: int) -> SyntheticBundle:
    if size < 1:
        raise ValueError(f"corpus size multiple must be >= 1, got {size}")
    return generate_synthetic_corpus(replace(base, distractor_multiplier=size - 1))


def _run_queries(
    bundle: SyntheticBundle,
    index,
    retrieval: RetrievalConfig,
    proposal: ProposalConfig,
    refine: RefineConfig,
    repetitions: int,
) -> tuple[dict[int, list], float]:
    """Fine-stage predictions plus mean retrieval seconds per query."""
    segments = {seg.segment_id: seg for seg in bundle.segments}
    predictions: dict[int, list] = {}
    total_retrieval = 0.0
    runs = 0
    for rep in range(max(repetitions, 1)):
        for entry in bundle.annotations:
            emb = bundle.query_table.vector(str(entry.query_id))
            result = run_pipeline(
                bundle.corpus,
                index,
                bundle.frames,
                segments,
                query_emb=emb,
                retrieval=retrieval,
                proposal=proposal,
                refine=refine,
            )
            total_retrieval += result.timings_s["segment_retrieval_s"]
            runs += 1
            if rep == 0:
                predictions[entry.query_id] = [rm.moment for rm in result.fine]
    return predictions, total_retrieval / max(runs, 1)


def bench_scaling(
    base: SyntheticBenchConfig,
    sizes: Sequence[int] = (1, 4),
    kinds: Sequence[str] = ("flat", "ivf"),
    index_cfg: IndexBuildConfig = IndexBuildConfig(),
    retrieval: RetrievalConfig = RetrievalConfig(),
    proposal: ProposalConfig = ProposalConfig(),
    refine: RefineConfig = RefineConfig(),
    eval_cfg: EvalConfig = EvalConfig(),
    repetitions: int = 3,
) -> BenchResult:
    """Latency and quality rows per (corpus size, index kind).

    The corpus at size s keeps the base videos and queries bit-identical
    and adds (s - 1) times as many distractor videos, so rows are
    comparable across sizes.
    """
    rows = []
    for size in sizes:
        bundle = _bundle_for_size(base, size)
        for kind in kinds:
            index = build_index_from_table(bundle.segment_table, replace(index_cfg, kind=kind))
            predictions, mean_retrieval = _run_queries(
                bundle, index, retrieval, proposal, refine, repetitions
            )
            report = evaluate_predictions(predictions, bundle.annotations, eval_cfg)
            rows.append(
                {
                    "corpus": f"{size}x",
                    "num_videos": len(bundle.corpus),
                    "num_segments": len(bundle.segments),
                    "index": kind,
                    "ndcg_cells": report.cells,
                    "retrieval_time_s": mean_retrieval,
                }
            )
    return BenchResult(tuple(rows))


def bench_k_sweep(
    base: SyntheticBenchConfig,
    ks: Sequence[int] = (100, 200, 300, 400, 500),
    kind: str = "flat",
    index_cfg: IndexBuildConfig = IndexBuildConfig(),
    retrieval: RetrievalConfig = RetrievalConfig(),
    proposal: ProposalConfig = ProposalConfig(),
    refine: RefineConfig = RefineConfig(),
    eval_cfg: EvalConfig = EvalConfig(),
) -> BenchResult:
    """NDCG grid per retrieval depth, one corpus and one index build."""
    if not ks or any(k <= 0 for k in ks):
        raise ValueError(f"retrieval depths must be positive, got {ks}")
    bundle = _bundle_for_size(base, 1)
    index = build_index_from_table(bundle.segment_table, replace(index_cfg, kind=kind))
    rows = []
    for k in ks:
        predictions, mean_retrieval = _run_queries(
            bundle, index, replace(retrieval, top_k_segments=k), proposal, refine, repetitions=1
        )
        report = evaluate_predictions(predictions, bundle.annotations, eval_cfg)
        rows.append(
            {
                "corpus": "1x",
                "num_videos": len(bundle.corpus),
                "num_segments": len(bundle.segments),
                "index": kind,
                "top_k_segments": k,
                "ndcg_cells": report.cells,
                "retrieval_time_s": mean_retrieval,
            }
        )
    return BenchResult(tuple(rows))
