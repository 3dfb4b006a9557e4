"""Command line entry points for the whole engine.

Every engine-config field can be overridden on the command line by a
flag named after its dotted path, for example
``--retrieval.top_k_segments 300``. Exit codes: 0 on success, 1 on
usage errors, 2 on data or environment errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from spr import bench as bench_mod
from spr.corpus import load_video_manifest, save_annotations, save_video_manifest, segment_corpus, write_segment_manifest
from spr.engine import (
    ENV_CONFIG_VAR,
    Engine,
    EngineConfig,
    apply_overrides,
    build_index_from_table,
    iter_config_fields,
    load_config,
    save_config,
)
from spr.embedding import EmbeddingTable
from spr.errors import SPRError
from spr.evaluation import EvalConfig, evaluate_run, practical_upper_bound_ndcg, upper_bound_ndcg
from spr.index import save_index
from spr.pipeline import STAGES, write_run_file
from spr.synth import SyntheticBenchConfig, generate_synthetic_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help=f"engine config file (or set {ENV_CONFIG_VAR})")
    for dotted, _ in iter_config_fields():
        parser.add_argument(f"--{dotted}", dest=dotted, metavar="VALUE", help=argparse.SUPPRESS)


def _resolve_config(args: argparse.Namespace, require_file: bool = True) -> EngineConfig:
    path = args.config or os.environ.get(ENV_CONFIG_VAR, "")
    overrides = {
        dotted: getattr(args, dotted)
        for dotted, _ in iter_config_fields()
        if getattr(args, dotted, None) is not None
    }
    if path:
        return load_config(path, overrides)
    if require_file:
        raise SPRError(f"no config file given; pass --config or set {ENV_CONFIG_VAR}")
    try:
        return apply_overrides(EngineConfig(), overrides)
    except ValueError as exc:
        raise SPRError(str(exc)) from exc


def _parse_csv_ints(raw: str, what: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise UsageError(f"{what} must be a comma-separated list of integers") from exc
    if not values:
        raise UsageError(f"{what} must be non-empty")
    return values


def build_parser() -> _Parser:
    parser = _Parser(prog="spr", description="Segment-proposal-ranking moment retrieval engine")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_segment = sub.add_parser("segment", help="cut a video manifest into a segment manifest")
    p_segment.add_argument("--videos", required=True, help="video manifest (JSON lines)")
    p_segment.add_argument("--out", help="segment manifest output path (default stdout)")
    _add_config_flags(p_segment)

    p_synth = sub.add_parser("gen-synth", help="generate a synthetic corpus bundle")
    p_synth.add_argument("--out-dir", required=True, help="directory for the bundle files")
    p_synth.add_argument("--num-videos", type=int, default=50)
    p_synth.add_argument("--video-duration-s", type=float, default=76.0)
    p_synth.add_argument("--dim", type=int, default=64)
    p_synth.add_argument("--num-queries", type=int, default=20)
    p_synth.add_argument("--moments-per-query", type=int, default=1)
    p_synth.add_argument("--query-noise", type=float, default=0.05)
    p_synth.add_argument("--distractor-multiplier", type=int, default=0)
    p_synth.add_argument("--segment-length-s", type=float, default=4.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument(
        "--zero-noise",
        action="store_true",
        help="plant moments with zero noise at every relevance grade",
    )

    p_index = sub.add_parser("index", help="index management")
    index_sub = p_index.add_subparsers(dest="index_command", metavar="ACTION")
    p_build = index_sub.add_parser("build", help="build and save an index from segment embeddings")
    p_build.add_argument("--kind", choices=["flat", "ivf", "ivfpq"], help="index kind override")
    p_build.add_argument("--out", required=True, help="output index file")
    _add_config_flags(p_build)

    p_search = sub.add_parser("search", help="run one query through the pipeline")
    group = p_search.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="query text")
    group.add_argument("--query-id", type=int, help="annotated query id (uses stored embeddings)")
    p_search.add_argument("--stage", choices=list(STAGES), default="fine")
    p_search.add_argument("--top-k-segments", type=int, help="retrieval depth override")
    p_search.add_argument("--limit", type=int, default=10, help="number of results to print")
    _add_config_flags(p_search)

    p_eval = sub.add_parser("eval", help="evaluate a run file against the annotations")
    p_eval.add_argument("--run", required=True, help="run file (JSON lines)")
    p_eval.add_argument("--stage", choices=list(STAGES), help="evaluate only this stage")
    p_eval.add_argument("--out", help="write the report JSON here (default stdout)")
    _add_config_flags(p_eval)

    p_run = sub.add_parser("run", help="run every annotated query and write a run file")
    p_run.add_argument("--stage", choices=list(STAGES), default="fine")
    p_run.add_argument("--out", required=True, help="run file output path")
    _add_config_flags(p_run)

    p_bound = sub.add_parser("bound", help="oracle upper bounds over coarse proposals")
    p_bound.add_argument("--mode", choices=["ub", "pub"], required=True)
    p_bound.add_argument("--time-scale", type=float, default=1.0, help="grid scale for pub")
    _add_config_flags(p_bound)

    p_bench = sub.add_parser("bench", help="latency and quality sweeps on synthetic corpora")
    p_bench.add_argument("--sizes", default="1,4", help="corpus size multiples, comma separated")
    p_bench.add_argument("--kinds", default="flat,ivf", help="index kinds, comma separated")
    p_bench.add_argument("--k-sweep", help="retrieval depths for the sweep, comma separated")
    p_bench.add_argument("--num-videos", type=int, default=200)
    p_bench.add_argument("--num-queries", type=int, default=16)
    p_bench.add_argument("--dim", type=int, default=32)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_bench.add_argument("--nprobe", type=int, default=8)
    p_bench.add_argument("--out", help="write JSON rows here (default stdout)")

    p_serve = sub.add_parser("serve", help="serve the HTTP API")
    p_serve.add_argument("--addr", help="bind address host:port (overrides config)")
    _add_config_flags(p_serve)

    return parser


def _cmd_segment(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args, require_file=False)
    corpus = load_video_manifest(args.videos)
    segments = segment_corpus(corpus, cfg.segmentation)
    if args.out:
        write_segment_manifest(args.out, segments)
        print(f"wrote {len(segments)} segments to {args.out}")
    else:
        write_segment_manifest(sys.stdout, segments)
    return EXIT_OK


def _cmd_gen_synth(args: argparse.Namespace) -> int:
    relevance_noise = {4: 0.05, 3: 0.15, 2: 0.30, 1: 0.50}
    if args.zero_noise:
        relevance_noise = {4: 0.0, 3: 0.0, 2: 0.0, 1: 0.0}
    synth_cfg = SyntheticBenchConfig(
        num_videos=args.num_videos,
        video_duration_s=args.video_duration_s,
        embedding_dim=args.dim,
        num_queries=args.num_queries,
        moments_per_query=args.moments_per_query,
        relevance_noise=relevance_noise,
        query_noise=0.0 if args.zero_noise else args.query_noise,
        distractor_multiplier=args.distractor_multiplier,
        segment_length_s=args.segment_length_s,
        seed=args.seed,
    )
    bundle = generate_synthetic_corpus(synth_cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "video_manifest": out_dir / "videos.jsonl",
        "segment_manifest": out_dir / "segments.jsonl",
        "segment_embeddings": out_dir / "segments.sprb",
        "segment_ids": out_dir / "segments.ids.jsonl",
        "frames": out_dir / "frames.sprb",
        "frame_ids": out_dir / "frames.ids.jsonl",
        "annotations": out_dir / "annotations.json",
        "query_embeddings": out_dir / "queries.sprb",
        "query_ids": out_dir / "queries.ids.jsonl",
    }
    save_video_manifest(paths["video_manifest"], bundle.corpus)
    write_segment_manifest(paths["segment_manifest"], bundle.segments)
    bundle.segment_table.save(paths["segment_embeddings"], paths["segment_ids"])
    bundle.frames.save(paths["frames"], paths["frame_ids"])
    save_annotations(paths["annotations"], bundle.annotations)
    bundle.query_table.save(paths["query_embeddings"], paths["query_ids"])
    engine_cfg = EngineConfig()
    engine_cfg = replace(
        engine_cfg,
        paths=replace(
            engine_cfg.paths,
            video_manifest=str(paths["video_manifest"]),
            segment_embeddings=str(paths["segment_embeddings"]),
            segment_ids=str(paths["segment_ids"]),
            frames=str(paths["frames"]),
            frame_ids=str(paths["frame_ids"]),
            annotations=str(paths["annotations"]),
            query_embeddings=str(paths["query_embeddings"]),
            query_ids=str(paths["query_ids"]),
        ),
        segmentation=replace(engine_cfg.segmentation, segment_length_s=args.segment_length_s),
        embedder=replace(engine_cfg.embedder, dim=args.dim, seed=args.seed),
    )
    config_path = out_dir / "config.json"
    save_config(engine_cfg, config_path)
    print(
        json.dumps(
            {
                "out_dir": str(out_dir),
                "config": str(config_path),
                "num_videos": len(bundle.corpus),
                "num_segments": len(bundle.segments),
                "num_queries": len(bundle.annotations),
            }
        )
    )
    return EXIT_OK


def _cmd_index_build(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.kind:
        cfg = replace(cfg, index=replace(cfg.index, kind=args.kind))
    if not cfg.paths.segment_embeddings or not cfg.paths.segment_ids:
        raise SPRError("config needs paths.segment_embeddings and paths.segment_ids")
    table = EmbeddingTable.load(cfg.paths.segment_embeddings, cfg.paths.segment_ids)
    index = build_index_from_table(table, cfg.index)
    save_index(args.out, index)
    print(
        json.dumps(
            {"index": args.out, "kind": index.kind, "rows": len(index), "dim": index.dim}
        )
    )
    return EXIT_OK


def _cmd_search(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    engine = Engine.from_config(cfg)
    if args.query_id is not None:
        annotations = engine.require_annotations()
        entry = annotations.get(args.query_id)
        emb = engine.query_embedding(entry.query_id, entry.text)
        result = engine.run(query_emb=emb, top_k_segments=args.top_k_segments)
    else:
        result = engine.run(query_text=args.query, top_k_segments=args.top_k_segments)
    moments = result.coarse if args.stage == "coarse" else result.fine
    limit = max(args.limit, 0) or len(moments)
    print(
        json.dumps(
            {
                "stage": args.stage,
                "results": [
                    {
                        "video_id": rm.moment.video_id,
                        "start_s": rm.moment.start_s,
                        "end_s": rm.moment.end_s,
                        "score": rm.score,
                        "rank": rm.rank,
                    }
                    for rm in moments[:limit]
                ],
                "timings_ms": {
                    k.removesuffix("_s") + "_ms": v * 1000.0 for k, v in result.timings_s.items()
                },
            },
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    engine = Engine.from_config(cfg)
    records, _ = engine.run_annotated(args.stage)
    write_run_file(args.out, records)
    print(f"wrote {len(records)} query records to {args.out}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    engine = Engine.from_config(cfg)
    annotations = engine.require_annotations()
    report = evaluate_run(args.run, annotations, cfg.eval, args.stage)
    if args.out:
        report.to_json(args.out)
        print(f"wrote evaluation report to {args.out}")
    else:
        print(report.to_json())
    return EXIT_OK


def _cmd_bound(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    engine = Engine.from_config(cfg)
    annotations = engine.require_annotations()
    proposals = engine.proposals_for_annotations()
    cells = []
    for k in cfg.eval.cutoffs:
        if args.mode == "ub":
            value = upper_bound_ndcg(
                proposals, annotations, engine.corpus, k, cfg.refine.context_padding_s
            )
            cells.append({"K": k, "bound": value})
        else:
            for iou_threshold in cfg.eval.iou_thresholds:
                value = practical_upper_bound_ndcg(
                    proposals,
                    annotations,
                    engine.corpus,
                    k,
                    iou_threshold,
                    args.time_scale,
                    cfg.refine.context_padding_s,
                )
                cells.append({"K": k, "iou": iou_threshold, "bound": value})
    print(
        json.dumps(
            {
                "mode": args.mode,
                "time_scale": args.time_scale if args.mode == "pub" else None,
                "num_queries": len(annotations),
                "cells": cells,
            },
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    base = SyntheticBenchConfig(
        num_videos=args.num_videos,
        num_queries=args.num_queries,
        embedding_dim=args.dim,
        seed=args.seed,
    )
    from spr.pipeline import RetrievalConfig

    retrieval = RetrievalConfig(top_k_segments=200, nprobe=args.nprobe)
    sizes = _parse_csv_ints(args.sizes, "--sizes")
    kinds = tuple(part.strip() for part in args.kinds.split(",") if part.strip())
    for kind in kinds:
        if kind not in ("flat", "ivf", "ivfpq"):
            raise UsageError(f"unknown index kind {kind!r}")
    eval_cfg = EvalConfig(cutoffs=(10,), iou_thresholds=(0.5,))
    result = bench_mod.bench_scaling(
        base,
        sizes=sizes,
        kinds=kinds,
        retrieval=retrieval,
        eval_cfg=eval_cfg,
        repetitions=args.repetitions,
    )
    rows = list(result.rows)
    if args.k_sweep:
        ks = _parse_csv_ints(args.k_sweep, "--k-sweep")
        sweep = bench_mod.bench_k_sweep(base, ks=ks, eval_cfg=eval_cfg)
        rows.extend(sweep.rows)
    output = bench_mod.BenchResult(tuple(rows))
    if args.out:
        output.to_jsonl(args.out)
        print(f"wrote {len(rows)} bench rows to {args.out}")
    else:
        sys.stdout.write(output.to_jsonl())
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from spr.service import create_app

    cfg = _resolve_config(args)
    if args.addr:
        cfg = replace(cfg, service=replace(cfg.service, bind_addr=args.addr))
    host, _, port_text = cfg.service.bind_addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise SPRError(f"bind_addr must look like host:port, got {cfg.service.bind_addr!r}")
    app = create_app(config=cfg)
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "segment": _cmd_segment,
    "gen-synth": _cmd_gen_synth,
    "search": _cmd_search,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "bound": _cmd_bound,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "index":
            if getattr(args, "index_command", None) != "build":
                print("error: the index command requires the 'build' action", file=sys.stderr)
                return EXIT_USAGE
            return _cmd_index_build(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SPRError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
