import numpy as np
import pytest

from spr.corpus import save_annotations, save_video_manifest
from spr.engine import (
    EmbedderConfig,
    Engine,
    EngineConfig,
    IndexBuildConfig,
    PathsConfig,
    build_index_from_table,
    save_config,
)
from spr.synth import SyntheticBenchConfig, generate_synthetic_corpus


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


@pytest.fixture(scope="session")
def small_bundle():
    cfg = SyntheticBenchConfig(num_videos=16, num_queries=6, embedding_dim=32, seed=11)
    return generate_synthetic_corpus(cfg)


@pytest.fixture(scope="session")
def small_engine(small_bundle):
    index = build_index_from_table(small_bundle.segment_table, IndexBuildConfig(kind="flat"))
    segments = {seg.segment_id: seg for seg in small_bundle.segments}
    return Engine(
        EngineConfig(),
        small_bundle.corpus,
        segments,
        small_bundle.frames,
        index,
        small_bundle.annotations,
        small_bundle.query_table,
    )


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory, small_bundle):
    """The small synthetic corpus persisted to disk, plus a config pointing at it."""
    root = tmp_path_factory.mktemp("bundle")
    save_video_manifest(root / "videos.jsonl", small_bundle.corpus)
    small_bundle.frames.save(root / "frames.sprb", root / "frame_ids.jsonl")
    small_bundle.segment_table.save(root / "segments.sprb", root / "segment_ids.jsonl")
    small_bundle.query_table.save(root / "queries.sprb", root / "query_ids.jsonl")
    save_annotations(root / "annotations.json", small_bundle.annotations)
    cfg = EngineConfig(
        paths=PathsConfig(
            video_manifest=str(root / "videos.jsonl"),
            segment_embeddings=str(root / "segments.sprb"),
            segment_ids=str(root / "segment_ids.jsonl"),
            frames=str(root / "frames.sprb"),
            frame_ids=str(root / "frame_ids.jsonl"),
            annotations=str(root / "annotations.json"),
            query_embeddings=str(root / "queries.sprb"),
            query_ids=str(root / "query_ids.jsonl"),
        ),
        embedder=EmbedderConfig(dim=small_bundle.config.embedding_dim, seed=small_bundle.config.seed),
    )
    save_config(cfg, root / "config.json")
    return root
