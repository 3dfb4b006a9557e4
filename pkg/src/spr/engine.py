"""Engine configuration and assembly shared by the CLI and the service.

A config document is one nested JSON object; every leaf is addressable
by its dotted name (for example ``retrieval.top_k_segments``) so command
line flags can override single fields without editing the file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

import spr
from spr.corpus import (
    AnnotationSet,
    Corpus,
    Segment,
    SegmentationConfig,
    load_annotations,
    load_video_manifest,
    segment_corpus,
)
from spr.embedding import EmbeddingTable, FrameStore, embed_text_toy
from spr.errors import SPRError
from spr.evaluation import EvalConfig
from spr.index import (
    FlatIndex,
    IVFIndex,
    IVFPQIndex,
    KMeansConfig,
    build_flat,
    build_ivf,
    build_ivfpq,
    load_index,
)
from spr.pipeline import (
    PipelineResult,
    Proposal,
    ProposalConfig,
    RefineConfig,
    RetrievalConfig,
    generate_proposals,
    retrieve_segments,
    run_pipeline,
)

INDEX_KINDS = ("flat", "ivf", "ivfpq")

ENV_CONFIG_VAR = "SPR_CONFIG"


@dataclass(frozen=True)
class PathsConfig:
    video_manifest: str = ""
    segment_embeddings: str = ""
    segment_ids: str = ""
    frames: str = ""
    frame_ids: str = ""
    annotations: str = ""
    query_embeddings: str = ""
    query_ids: str = ""
    index: str = ""


@dataclass(frozen=True)
class IndexBuildConfig:
    kind: str = "flat"
    nlist: int = 0
    m: int = 16
    nbits: int = 8
    seed: int = 0
    max_iters: int = 25
    rel_improvement_eps: float = 1e-4

    def __post_init__(self) -> None:
        if self.kind not in INDEX_KINDS:
            raise ValueError(f"index kind must be one of {INDEX_KINDS}, got {self.kind!r}")
        if self.nlist < 0:
            raise ValueError("nlist must be >= 0 (0 selects the square-root rule)")

    def kmeans_config(self) -> KMeansConfig:
        return KMeansConfig(
            k=max(self.nlist, 1),
            max_iters=self.max_iters,
            rel_improvement_eps=self.rel_improvement_eps,
            seed=self.seed,
        )


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ServiceConfig:
    bind_addr: str = "127.0.0.1:8080"
    deadline_s: float = 10.0
    static_dir: str = ""


@dataclass(frozen=True)
class EngineConfig:
    paths: PathsConfig = PathsConfig()
    segmentation: SegmentationConfig = SegmentationConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    proposal: ProposalConfig = ProposalConfig()
    refine: RefineConfig = RefineConfig()
    index: IndexBuildConfig = IndexBuildConfig()
    embedder: EmbedderConfig = EmbedderConfig()
    service: ServiceConfig = ServiceConfig()
    eval: EvalConfig = EvalConfig()


_SECTION_TYPES: dict[str, type] = {
    "paths": PathsConfig,
    "segmentation": SegmentationConfig,
    "retrieval": RetrievalConfig,
    "proposal": ProposalConfig,
    "refine": RefineConfig,
    "index": IndexBuildConfig,
    "embedder": EmbedderConfig,
    "service": ServiceConfig,
    "eval": EvalConfig,
}


def iter_config_fields() -> Iterator[tuple[str, type]]:
    """All dotted leaf names with their declared value types."""
    for section, cls in _SECTION_TYPES.items():
        for fld in fields(cls):
            yield f"{section}.{fld.name}", fld.type  # type: ignore[misc]


def _parse_leaf(dotted: str, raw: Any, current: Any) -> Any:
    """Coerce a JSON or CLI value to the type of the current default."""
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{dotted}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, str):
        return str(raw)
    if isinstance(current, tuple):
        if isinstance(raw, (list, tuple)):
            items = list(raw)
        else:
            items = [part for part in str(raw).split(",") if part.strip()]
        elem = type(current[0]) if current else float
        return tuple(elem(item) for item in items)
    raise ValueError(f"{dotted}: unsupported config field type {type(current).__name__}")


def _apply_to_section(section_value: Any, section: str, updates: Mapping[str, Any]) -> Any:
    known = {fld.name for fld in fields(type(section_value))}
    coerced = {}
    for key, raw in updates.items():
        if key not in known:
            raise ValueError(f"unknown config field {section}.{key}")
        coerced[key] = _parse_leaf(f"{section}.{key}", raw, getattr(section_value, key))
    try:
        return replace(section_value, **coerced)
    except ValueError as exc:
        raise ValueError(f"invalid config for section {section!r}: {exc}") from exc


def config_from_dict(doc: Mapping[str, Any], base: EngineConfig | None = None) -> EngineConfig:
    cfg = base if base is not None else EngineConfig()
    if not isinstance(doc, Mapping):
        raise ValueError("config document must be a JSON object")
    sections = {}
    for section, payload in doc.items():
        if section not in _SECTION_TYPES:
            raise ValueError(f"unknown config section {section!r}")
        if not isinstance(payload, Mapping):
            raise ValueError(f"config section {section!r} must be an object")
        sections[section] = _apply_to_section(getattr(cfg, section), section, payload)
    return replace(cfg, **sections)


def config_to_dict(cfg: EngineConfig) -> dict[str, Any]:
    return {section: dataclasses.asdict(getattr(cfg, section)) for section in _SECTION_TYPES}


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    """Read a config file and apply dotted-name overrides on top."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SPRError(f"config file {path}: invalid JSON ({exc})") from exc
    try:
        cfg = config_from_dict(doc)
        return apply_overrides(cfg, overrides or {})
    except ValueError as exc:
        raise SPRError(f"config file {path}: {exc}") from exc


def apply_overrides(cfg: EngineConfig, overrides: Mapping[str, Any]) -> EngineConfig:
    grouped: dict[str, dict[str, Any]] = {}
    for dotted, raw in overrides.items():
        section, sep, leaf = dotted.partition(".")
        if not sep or section not in _SECTION_TYPES:
            raise ValueError(f"unknown config field {dotted!r}")
        grouped.setdefault(section, {})[leaf] = raw
    sections = {
        section: _apply_to_section(getattr(cfg, section), section, updates)
        for section, updates in grouped.items()
    }
    return replace(cfg, **sections)


def save_config(cfg: EngineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def build_index_from_table(table: EmbeddingTable, cfg: IndexBuildConfig):
    nlist = cfg.nlist if cfg.nlist > 0 else None
    if cfg.kind == "flat":
        return build_flat(table)
    if cfg.kind == "ivf":
        return build_ivf(table, nlist, cfg.kmeans_config())
    return build_ivfpq(table, nlist, cfg.m, cfg.nbits, cfg.kmeans_config())


class Engine:
    """Loaded corpus, frames, and index behind the query pipeline."""

    def __init__(
        self,
        cfg: EngineConfig,
        corpus: Corpus,
        segments: Mapping[str, Segment],
        frames: FrameStore,
        index: FlatIndex | IVFIndex | IVFPQIndex,
        annotations: AnnotationSet | None = None,
        query_table: EmbeddingTable | None = None,
    ) -> None:
        self.cfg = cfg
        self.corpus = corpus
        self.segments = dict(segments)
        self.frames = frames
        self.index = index
        self.annotations = annotations
        self.query_table = query_table
        self.version = spr.__version__
        unresolved = [ident for ident in index.ids if ident not in self.segments]
        if unresolved:
            raise SPRError(
                f"{len(unresolved)} index ids do not resolve to segments "
                f"(first: {unresolved[0]!r}); segmentation config mismatch?"
            )
        if frames.dim != index.dim:
            raise SPRError(f"frame dim {frames.dim} does not match index dim {index.dim}")

    @classmethod
    def from_config(cls, cfg: EngineConfig) -> "Engine":
        paths = cfg.paths
        for name in ("video_manifest", "frames", "frame_ids"):
            if not getattr(paths, name):
                raise SPRError(f"config is missing required path paths.{name}")
        corpus = load_video_manifest(paths.video_manifest)
        corpus.seal()
        segments = {seg.segment_id: seg for seg in segment_corpus(corpus, cfg.segmentation)}
        frames = FrameStore.load(paths.frames, paths.frame_ids)
        frames.validate_against(corpus)
        if paths.index:
            index = load_index(paths.index)
        else:
            if not paths.segment_embeddings or not paths.segment_ids:
                raise SPRError(
                    "config needs either paths.index or paths.segment_embeddings plus paths.segment_ids"
                )
            table = EmbeddingTable.load(paths.segment_embeddings, paths.segment_ids)
            index = build_index_from_table(table, cfg.index)
        annotations = None
        if paths.annotations:
            annotations = load_annotations(paths.annotations, corpus)
        query_table = None
        if paths.query_embeddings and paths.query_ids:
            query_table = EmbeddingTable.load(paths.query_embeddings, paths.query_ids)
        return cls(cfg, corpus, segments, frames, index, annotations, query_table)

    @property
    def embed_dim(self) -> int:
        return self.cfg.embedder.dim if self.cfg.embedder.dim > 0 else self.index.dim

    def embed_query(self, text: str) -> np.ndarray:
        return embed_text_toy(text, self.embed_dim, self.cfg.embedder.seed)

    def query_embedding(self, entry_id: int, text: str) -> np.ndarray:
        if self.query_table is not None and str(entry_id) in self.query_table:
            return self.query_table.vector(str(entry_id))
        return self.embed_query(text)

    def run(
        self,
        *,
        query_emb: np.ndarray | None = None,
        query_text: str | None = None,
        top_k_segments: int | None = None,
    ) -> PipelineResult:
        retrieval = self.cfg.retrieval
        if top_k_segments is not None:
            retrieval = replace(retrieval, top_k_segments=top_k_segments)
        return run_pipeline(
            self.corpus,
            self.index,
            self.frames,
            self.segments,
            query_emb=query_emb,
            query_text=query_text,
            embedder=self.embed_query,
            retrieval=retrieval,
            proposal=self.cfg.proposal,
            refine=self.cfg.refine,
        )

    def coarse_proposals(self, query_emb: np.ndarray) -> list[Proposal]:
        ranked = retrieve_segments(query_emb, self.index, self.segments, self.cfg.retrieval)
        return generate_proposals(ranked, self.cfg.proposal)

    def require_annotations(self) -> AnnotationSet:
        if self.annotations is None:
            raise SPRError("this command needs paths.annotations in the config")
        return self.annotations

    def run_annotated(
        self,
        stage: str,
        top_k_segments: int | None = None,
        collect_timings: bool = False,
    ) -> tuple[list[tuple[int, str, tuple]], dict[str, float]]:
        """Run the pipeline over every annotated query.

        Returns run-file records for the requested stage and, when asked,
        mean per-stage timings in seconds.
        """
        annotations = self.require_annotations()
        records = []
        sums: dict[str, float] = {}
        count = 0
        for entry in annotations:
            emb = self.query_embedding(entry.query_id, entry.text)
            result = self.run(query_emb=emb, top_k_segments=top_k_segments)
            moments = result.coarse if stage == "coarse" else result.fine
            records.append((entry.query_id, stage, moments))
            if collect_timings:
                for key, value in result.timings_s.items():
                    sums[key] = sums.get(key, 0.0) + value
                count += 1
        means = {key: value / count for key, value in sums.items()} if count else {}
        return records, means

    def proposals_for_annotations(self) -> dict[int, list[Proposal]]:
        annotations = self.require_annotations()
        out = {}
        for entry in annotations:
            emb = self.query_embedding(entry.query_id, entry.text)
            out[entry.query_id] = self.coarse_proposals(emb)
        return out

    def stats(self) -> dict[str, Any]:
        return {
            "num_videos": len(self.corpus),
            "num_segments": len(self.index),
            "index_kind": self.index.kind,
            "dim": self.index.dim,
            "segment_length_s": self.cfg.segmentation.segment_length_s,
            "top_k_segments": self.cfg.retrieval.top_k_segments,
            "engine_version": self.version,
        }
