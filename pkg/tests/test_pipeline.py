import io
import math

import numpy as np
import pytest

from spr.corpus import Corpus, Moment, Segment, SegmentationConfig, VideoMeta, segment_corpus
from spr.embedding import EmbeddingTable, FrameStore
from spr.errors import FormatError
from spr.index import build_flat
from spr.pipeline import (
    Proposal,
    ProposalConfig,
    RankedMoment,
    RankedSegment,
    RefineConfig,
    RetrievalConfig,
    generate_proposals,
    pad_proposal,
    read_run_file,
    refine_similarity_profile,
    retrieve_segments,
    run_pipeline,
    score_moment,
    write_run_file,
)

from conftest import unit_rows


def seg(video, index, length=4.0):
    return Segment(f"{video}#{index}", video, index, index * length, (index + 1) * length)


def ranked(segment, rank, score=0.5):
    return RankedSegment(segment, rank, score)


class TestProposalMerging:
    def test_adjacent_segments_merge(self):
        items = [ranked(seg("v", 0), 2, 0.8), ranked(seg("v", 1), 1, 0.9)]
        props = generate_proposals(items, ProposalConfig())
        assert len(props) == 1
        p = props[0]
        assert (p.start_s, p.end_s) == (0.0, 8.0)
        assert p.constituent_segment_ids == ("v#0", "v#1")
        assert p.best_segment_rank == 1
        assert p.best_segment_score == 0.9

    def test_gap_splits_run(self):
        items = [ranked(seg("v", 0), 1), ranked(seg("v", 2), 2)]
        props = generate_proposals(items, ProposalConfig(gap_tolerance_s=0.0))
        assert [(p.start_s, p.end_s) for p in props] == [(0.0, 4.0), (8.0, 12.0)]

    def test_gap_tolerance_bridges_gap(self):
        items = [ranked(seg("v", 0), 1), ranked(seg("v", 2), 2)]
        props = generate_proposals(items, ProposalConfig(gap_tolerance_s=4.0))
        assert [(p.start_s, p.end_s) for p in props] == [(0.0, 12.0)]

    def test_videos_never_merge(self):
        items = [ranked(seg("a", 0), 1), ranked(seg("b", 0), 2)]
        props = generate_proposals(items, ProposalConfig(gap_tolerance_s=100.0))
        assert len(props) == 2

    def test_ordered_by_best_rank(self):
        items = [
            ranked(seg("a", 5), 3, 0.7),
            ranked(seg("b", 0), 1, 0.9),
            ranked(seg("a", 0), 2, 0.8),
        ]
        props = generate_proposals(items, ProposalConfig())
        assert [(p.video_id, p.best_segment_rank) for p in props] == [("b", 1), ("a", 2), ("a", 3)]

    def test_matches_interval_merge_oracle(self):
        # reference implementation: sort by start, merge while gap <= tol
        rng = np.random.default_rng(0)
        for trial in range(50):
            tol = float(rng.choice([0.0, 4.0]))
            picks = sorted(rng.choice(40, size=12, replace=False).tolist())
            items = [ranked(seg("v", i), r + 1, 1.0 - 0.01 * r) for r, i in enumerate(picks)]
            expected = []
            cur = [picks[0]]
            for i in picks[1:]:
                if i * 4.0 - (cur[-1] + 1) * 4.0 <= tol:
                    cur.append(i)
                else:
                    expected.append(cur)
                    cur = [i]
            expected.append(cur)
            props = generate_proposals(items, ProposalConfig(gap_tolerance_s=tol))
            got = sorted((p.start_s, p.end_s) for p in props)
            want = sorted((run[0] * 4.0, (run[-1] + 1) * 4.0) for run in expected)
            assert got == want, f"trial {trial}"

    def test_unsorted_input_handled(self):
        items = [ranked(seg("v", 3), 1), ranked(seg("v", 1), 2), ranked(seg("v", 2), 3)]
        props = generate_proposals(items, ProposalConfig())
        assert [(p.start_s, p.end_s) for p in props] == [(4.0, 16.0)]

    def test_empty_input(self):
        assert generate_proposals([], ProposalConfig()) == []


class TestPadding:
    def test_pad_and_clamp(self):
        p = Proposal("v", 4.0, 8.0, ("v#1",), 1, 0.9)
        padded = pad_proposal(p, VideoMeta("v", 10.0), 8.0)
        assert (padded.start_s, padded.end_s) == (0.0, 10.0)

    def test_pad_inside_video(self):
        p = Proposal("v", 40.0, 44.0, ("v#10",), 1, 0.9)
        padded = pad_proposal(p, VideoMeta("v", 100.0), 8.0)
        assert (padded.start_s, padded.end_s) == (32.0, 52.0)

    def test_video_mismatch_rejected(self):
        p = Proposal("v", 0.0, 4.0, ("v#0",), 1, 0.9)
        with pytest.raises(ValueError):
            pad_proposal(p, VideoMeta("w", 10.0), 8.0)


def profile_frames(profile, dim=8):
    """Frames whose similarity to a fixed query follows the given profile."""
    query = np.zeros(dim, dtype=np.float32)
    query[0] = 1.0
    rows = np.zeros((len(profile), dim), dtype=np.float32)
    for t, value in enumerate(profile):
        rows[t, 0] = value
        rows[t, 1] = math.sqrt(max(0.0, 1.0 - value * value))
    return query, FrameStore({"v": rows})


class TestRefinement:
    def test_keeps_frames_above_alpha_peak(self):
        profile = [0.1, 0.2, 0.95, 1.0, 0.9, 0.2, 0.1, 0.1]
        query, frames = profile_frames(profile)
        padded = Proposal("v", 0.0, 8.0, ("v#0",), 1, 1.0)
        moment = refine_similarity_profile(query, padded, frames, alpha=0.7)
        assert (moment.start_s, moment.end_s) == (2.0, 5.0)

    def test_interval_spans_first_to_last_survivor(self):
        # a dip between two peaks stays inside the refined interval
        profile = [0.0, 0.9, 0.1, 0.95, 0.0]
        query, frames = profile_frames(profile)
        padded = Proposal("v", 0.0, 5.0, ("v#0",), 1, 1.0)
        moment = refine_similarity_profile(query, padded, frames, alpha=0.7)
        assert (moment.start_s, moment.end_s) == (1.0, 4.0)

    def test_nonpositive_peak_keeps_argmax(self):
        profile = [-0.5, -0.2, -0.8]
        query, frames = profile_frames(profile)
        padded = Proposal("v", 0.0, 3.0, ("v#0",), 1, 1.0)
        moment = refine_similarity_profile(query, padded, frames, alpha=0.7)
        assert (moment.start_s, moment.end_s) == (1.0, 2.0)

    def test_alpha_one_keeps_only_peak(self):
        profile = [0.5, 1.0, 0.5]
        query, frames = profile_frames(profile)
        padded = Proposal("v", 0.0, 3.0, ("v#0",), 1, 1.0)
        moment = refine_similarity_profile(query, padded, frames, alpha=1.0)
        assert (moment.start_s, moment.end_s) == (1.0, 2.0)

    def test_clamped_to_padded_window(self):
        profile = [1.0, 1.0, 1.0, 1.0]
        query, frames = profile_frames(profile)
        padded = Proposal("v", 0.5, 3.5, ("v#0",), 1, 1.0)
        moment = refine_similarity_profile(query, padded, frames, alpha=0.7)
        assert moment.start_s >= 0.5 and moment.end_s <= 3.5

    def test_score_moment_is_max(self):
        query, frames = profile_frames([0.1, 0.7, 0.3])
        rows = frames.slice("v", 0.0, 3.0)
        assert score_moment(query, rows) == pytest.approx(0.7, abs=1e-6)

    def test_score_moment_empty_rejected(self):
        with pytest.raises(ValueError):
            score_moment(np.ones(4, dtype=np.float32), np.zeros((0, 4), dtype=np.float32))


def tiny_world(seed=0, num_videos=4, duration=24.0, dim=16):
    """A corpus with one strongly matching second in one video."""
    rng = np.random.default_rng(seed)
    corpus = Corpus()
    frames = {}
    for i in range(num_videos):
        vid = f"v{i}"
        corpus.register_video(vid, duration)
        frames[vid] = unit_rows(rng, int(duration), dim)
    corpus.seal()
    query = unit_rows(rng, 1, dim)[0]
    # plant the query direction at v1 seconds 9..12
    for t in (9, 10, 11):
        frames["v1"][t] = query
    store = FrameStore(frames)
    segments = segment_corpus(corpus, SegmentationConfig(4.0))
    seg_map = {s.segment_id: s for s in segments}
    rows = []
    for s in segments:
        block = store.frames_for(s.video_id).astype(np.float64)
        pooled = block[int(s.start_s) : int(math.ceil(s.end_s))].sum(axis=0)
        rows.append(pooled / np.linalg.norm(pooled))
    table = EmbeddingTable([s.segment_id for s in segments], np.asarray(rows, dtype=np.float32), renormalize=False)
    return corpus, store, seg_map, build_flat(table), query


class TestRetrieveSegments:
    def test_ranks_follow_index_order(self):
        corpus, store, seg_map, index, query = tiny_world()
        out = retrieve_segments(query, index, seg_map, RetrievalConfig(top_k_segments=10))
        assert [r.rank for r in out] == list(range(1, 11))
        scores = [r.score for r in out]
        assert scores == sorted(scores, reverse=True)
        assert out[0].segment.video_id == "v1"

    def test_unresolvable_id_rejected(self):
        corpus, store, seg_map, index, query = tiny_world()
        with pytest.raises(KeyError):
            retrieve_segments(query, index, {}, RetrievalConfig(top_k_segments=5))


class TestRunPipeline:
    def test_finds_planted_moment(self):
        corpus, store, seg_map, index, query = tiny_world()
        result = run_pipeline(corpus, index, store, seg_map, query_emb=query)
        top = result.fine[0]
        assert top.moment.video_id == "v1"
        assert top.moment.start_s <= 9.0 and top.moment.end_s >= 12.0
        assert top.score == pytest.approx(1.0, abs=1e-5)
        assert top.stage == "fine"

    def test_coarse_stage_present(self):
        corpus, store, seg_map, index, query = tiny_world()
        result = run_pipeline(corpus, index, store, seg_map, query_emb=query)
        assert result.coarse[0].stage == "coarse"
        assert result.coarse[0].moment.video_id == "v1"
        assert [m.rank for m in result.coarse] == list(range(1, len(result.coarse) + 1))

    def test_identity_refiner_returns_proposal_bounds(self):
        corpus, store, seg_map, index, query = tiny_world()
        result = run_pipeline(
            corpus, index, store, seg_map, query_emb=query,
            refine=RefineConfig(kind="identity"),
        )
        top = result.fine[0]
        # identity keeps the unpadded proposal interval: the planted run
        # lives in segments [8,12) and (via pooling leakage) neighbors
        assert top.moment.start_s % 4.0 == 0.0
        assert top.moment.end_s % 4.0 == 0.0

    def test_fine_ranks_dense_and_sorted(self):
        corpus, store, seg_map, index, query = tiny_world()
        result = run_pipeline(corpus, index, store, seg_map, query_emb=query)
        assert [m.rank for m in result.fine] == list(range(1, len(result.fine) + 1))
        scores = [m.score for m in result.fine]
        assert scores == sorted(scores, reverse=True)

    def test_text_query_requires_embedder(self):
        corpus, store, seg_map, index, query = tiny_world()
        with pytest.raises(ValueError, match="embedder"):
            run_pipeline(corpus, index, store, seg_map, query_text="hello")

    def test_exactly_one_query_form(self):
        corpus, store, seg_map, index, query = tiny_world()
        with pytest.raises(ValueError):
            run_pipeline(corpus, index, store, seg_map)
        with pytest.raises(ValueError):
            run_pipeline(corpus, index, store, seg_map, query_emb=query, query_text="x")

    def test_timings_cover_all_stages(self):
        corpus, store, seg_map, index, query = tiny_world()
        result = run_pipeline(corpus, index, store, seg_map, query_emb=query)
        assert set(result.timings_s) == {
            "query_embed_s",
            "segment_retrieval_s",
            "proposal_generation_s",
            "refine_rerank_s",
        }
        assert all(v >= 0 for v in result.timings_s.values())


class TestRunFile:
    def make_records(self):
        moments = (
            RankedMoment(Moment("v0", 0.0, 5.0), 0.9, 1, "fine"),
            RankedMoment(Moment("v1", 2.0, 4.0), 0.8, 2, "fine"),
        )
        return [(0, "fine", moments), (1, "fine", moments[:1])]

    def test_roundtrip(self):
        buf = io.StringIO()
        write_run_file(buf, self.make_records())
        buf.seek(0)
        out = read_run_file(buf)
        assert set(out) == {0, 1}
        assert out[0] == [Moment("v0", 0.0, 5.0), Moment("v1", 2.0, 4.0)]

    def test_stage_filter(self):
        buf = io.StringIO()
        records = [(0, "coarse", self.make_records()[0][2]), (0, "fine", self.make_records()[0][2])]
        write_run_file(buf, records)
        buf.seek(0)
        out = read_run_file(buf, stage="fine")
        assert set(out) == {0}

    def test_duplicate_query_rejected(self):
        buf = io.StringIO()
        records = [self.make_records()[0], self.make_records()[0]]
        write_run_file(buf, records)
        buf.seek(0)
        with pytest.raises(FormatError, match="duplicate"):
            read_run_file(buf)

    def test_sparse_ranks_rejected(self):
        text = '{"query_id": 0, "stage": "fine", "results": [{"video_id": "v", "start_s": 0.0, "end_s": 1.0, "score": 0.5, "rank": 2}]}\n'
        with pytest.raises(FormatError, match="dense"):
            read_run_file(io.StringIO(text))

    def test_unknown_stage_rejected(self):
        text = '{"query_id": 0, "stage": "weird", "results": []}\n'
        with pytest.raises(FormatError, match="stage"):
            read_run_file(io.StringIO(text))

    def test_invalid_json_rejected(self):
        with pytest.raises(FormatError, match="line 1"):
            read_run_file(io.StringIO("oops\n"))

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "run.jsonl"
        write_run_file(path, self.make_records())
        assert set(read_run_file(path)) == {0, 1}


class TestConfigValidation:
    def test_retrieval(self):
        with pytest.raises(ValueError):
            RetrievalConfig(top_k_segments=0)
        with pytest.raises(ValueError):
            RetrievalConfig(nprobe=0)

    def test_proposal(self):
        with pytest.raises(ValueError):
            ProposalConfig(gap_tolerance_s=-1.0)

    def test_refine(self):
        with pytest.raises(ValueError):
            RefineConfig(context_padding_s=-1.0)
        with pytest.raises(ValueError):
            RefineConfig(profile_alpha=0.0)
        with pytest.raises(ValueError):
            RefineConfig(profile_alpha=1.5)
        with pytest.raises(ValueError):
            RefineConfig(kind="nope")
