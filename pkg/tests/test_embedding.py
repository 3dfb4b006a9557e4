import logging
import math

import numpy as np
import pytest

from spr.corpus import Corpus
from spr.embedding import (
    EmbeddingTable,
    FrameStore,
    cosine_similarity,
    embed_text_toy,
    make_frame_id,
    mil_nce_loss,
    normalize,
    normalize_rows,
    tokenize,
)
from spr.errors import FormatError


class TestNormalize:
    def test_unit_norm(self):
        v = normalize(np.array([3.0, 4.0]))
        assert v.dtype == np.float32
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            normalize(np.zeros(4))

    def test_rows(self):
        rows = normalize_rows(np.array([[2.0, 0.0], [0.0, 5.0]]))
        np.testing.assert_allclose(rows, [[1.0, 0.0], [0.0, 1.0]], atol=1e-7)

    def test_rows_with_zero_row_rejected(self):
        with pytest.raises(ValueError):
            normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_cosine(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
        assert cosine_similarity([1.0, 1.0], [2.0, 2.0]) == pytest.approx(1.0)


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("A man, RUNS fast!") == ["a", "man", "runs", "fast"]

    def test_digits_kept(self):
        assert tokenize("scene 42") == ["scene", "42"]

    def test_empty(self):
        assert tokenize("...") == []


class TestToyEmbedder:
    def test_deterministic(self):
        a = embed_text_toy("a dog catches a frisbee", 32)
        b = embed_text_toy("a dog catches a frisbee", 32)
        np.testing.assert_array_equal(a, b)

    def test_unit_norm_float32(self):
        v = embed_text_toy("hello world", 64)
        assert v.dtype == np.float32
        assert np.linalg.norm(v.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)

    def test_token_order_irrelevant(self):
        a = embed_text_toy("red car moving", 48)
        b = embed_text_toy("moving red car", 48)
        np.testing.assert_array_equal(a, b)

    def test_case_and_punctuation_irrelevant(self):
        a = embed_text_toy("Red CAR!", 48)
        b = embed_text_toy("red car", 48)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_embedding(self):
        a = embed_text_toy("red car", 48, seed=0)
        b = embed_text_toy("red car", 48, seed=1)
        assert not np.array_equal(a, b)

    def test_single_token_is_one_hot(self):
        v = embed_text_toy("dog", 32)
        nonzero = np.flatnonzero(v)
        assert len(nonzero) == 1
        assert abs(v[nonzero[0]]) == pytest.approx(1.0)

    def test_repeated_token_same_direction(self):
        np.testing.assert_allclose(
            embed_text_toy("dog dog dog", 32), embed_text_toy("dog", 32), atol=1e-7
        )

    def test_no_tokens_rejected(self):
        with pytest.raises(ValueError):
            embed_text_toy("!!!", 32)

    def test_bad_dim_rejected(self):
        with pytest.raises(ValueError):
            embed_text_toy("dog", 0)

    def test_many_seeds_never_collapse(self):
        # property: across seeds the embedder stays unit-norm and text-sensitive
        for seed in range(20):
            a = embed_text_toy("planted moment 0001", 64, seed)
            b = embed_text_toy("planted moment 0002", 64, seed)
            assert np.linalg.norm(a.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)
            assert not np.array_equal(a, b)


class TestEmbeddingTable:
    def make(self, n=4, dim=8, seed=0):
        rng = np.random.default_rng(seed)
        rows = rng.standard_normal((n, dim))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        ids = [f"id{i}" for i in range(n)]
        return EmbeddingTable(ids, rows.astype(np.float32))

    def test_lookup(self):
        table = self.make()
        assert table.row("id2") == 2
        np.testing.assert_array_equal(table.vector("id2"), table.matrix[2])
        assert "id3" in table and "nope" not in table

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            self.make().row("nope")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            EmbeddingTable(["a", "a"], np.eye(2, dtype=np.float32))

    def test_id_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingTable(["a"], np.eye(2, dtype=np.float32))

    def test_renormalizes_drifted_rows_with_warning(self, caplog):
        rows = np.array([[3.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        with caplog.at_level(logging.WARNING):
            table = EmbeddingTable(["a", "b"], rows)
        assert "renormalized" in caplog.text
        np.testing.assert_allclose(np.linalg.norm(table.matrix, axis=1), 1.0, atol=1e-6)

    def test_small_drift_renormalized_silently(self, caplog):
        rows = np.array([[1.0 + 1e-5, 0.0]], dtype=np.float32)
        with caplog.at_level(logging.WARNING):
            EmbeddingTable(["a"], rows)
        assert caplog.text == ""

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingTable(["a"], np.zeros((1, 4), dtype=np.float32))

    def test_nan_rejected(self):
        rows = np.full((1, 4), np.nan, dtype=np.float32)
        with pytest.raises(ValueError):
            EmbeddingTable(["a"], rows)

    def test_save_load_roundtrip(self, tmp_path):
        table = self.make(n=6, dim=5)
        table.save(tmp_path / "t.sprb", tmp_path / "t.ids.jsonl")
        loaded = EmbeddingTable.load(tmp_path / "t.sprb", tmp_path / "t.ids.jsonl")
        assert loaded.ids == table.ids
        np.testing.assert_array_equal(loaded.matrix, table.matrix)


def frame_block(video_id, count, dim=8, seed=0):
    rng = np.random.default_rng(abs(hash(video_id)) % 2**32 + seed)
    rows = rng.standard_normal((count, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


class TestFrameStore:
    def make(self):
        return FrameStore({"v0": frame_block("v0", 10), "v1": frame_block("v1", 7)})

    def test_frame_counts(self):
        store = self.make()
        assert store.frame_count("v0") == 10
        assert store.frame_count("v1") == 7

    def test_slice_whole_seconds(self):
        store = self.make()
        got = store.slice("v0", 2.0, 5.0)
        np.testing.assert_array_equal(got, store.frames_for("v0")[2:5])

    def test_slice_fractional_bounds_expand(self):
        # [1.5, 2.5) touches seconds 1 and 2
        store = self.make()
        got = store.slice("v0", 1.5, 2.5)
        np.testing.assert_array_equal(got, store.frames_for("v0")[1:3])

    def test_slice_clipped_to_video(self):
        store = self.make()
        got = store.slice("v1", 5.0, 100.0)
        np.testing.assert_array_equal(got, store.frames_for("v1")[5:7])

    def test_empty_slice_rejected(self):
        with pytest.raises(ValueError):
            self.make().slice("v0", 3.0, 3.0)

    def test_unknown_video_rejected(self):
        with pytest.raises(KeyError):
            self.make().slice("zz", 0.0, 1.0)

    def test_validate_against_corpus(self):
        store = self.make()
        corpus = Corpus()
        corpus.register_video("v0", 9.5)  # ceil(9.5) == 10 frames
        corpus.register_video("v1", 7.0)
        store.validate_against(corpus)

    def test_validate_detects_count_mismatch(self):
        store = self.make()
        corpus = Corpus()
        corpus.register_video("v0", 12.0)
        corpus.register_video("v1", 7.0)
        with pytest.raises(ValueError, match="v0"):
            store.validate_against(corpus)

    def test_validate_detects_missing_video(self):
        store = self.make()
        corpus = Corpus()
        corpus.register_video("v0", 10.0)
        corpus.register_video("v1", 7.0)
        corpus.register_video("v2", 3.0)
        with pytest.raises(ValueError, match="v2"):
            store.validate_against(corpus)

    def test_frame_id_format(self):
        assert make_frame_id("v7", 3) == "v7@3"

    def test_save_load_roundtrip(self, tmp_path):
        store = self.make()
        store.save(tmp_path / "f.sprb", tmp_path / "f.ids.jsonl")
        loaded = FrameStore.load(tmp_path / "f.sprb", tmp_path / "f.ids.jsonl")
        assert set(loaded.video_ids) == {"v0", "v1"}
        np.testing.assert_array_equal(loaded.frames_for("v1"), store.frames_for("v1"))

    def test_load_rejects_gap_in_seconds(self, tmp_path):
        from spr import binio

        matrix = frame_block("v0", 3)
        binio.write_matrix(tmp_path / "f.sprb", matrix)
        binio.write_id_manifest(tmp_path / "f.ids.jsonl", ["v0@0", "v0@1", "v0@3"])
        with pytest.raises(FormatError, match="contiguous"):
            FrameStore.load(tmp_path / "f.sprb", tmp_path / "f.ids.jsonl")


class TestMilNce:
    def test_single_pair_with_only_positive_is_zero(self):
        assert mil_nce_loss(np.array([[2.5]]), [(0, 0)]) == pytest.approx(0.0, abs=1e-12)

    def test_identity_two_by_two(self):
        loss = mil_nce_loss(np.eye(2), [(0, 0), (1, 1)])
        assert loss == pytest.approx(0.31326169, abs=1e-6)

    def test_identity_value_matches_closed_form(self):
        # diagonal positives with unit margin: softplus(-1) per anchor
        for b in (2, 3, 5):
            loss = mil_nce_loss(np.eye(b), [(i, i) for i in range(b)])
            expected = math.log(1.0 + (b - 1) * math.exp(-1.0))
            assert loss == pytest.approx(expected, abs=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        sim = rng.standard_normal((4, 4))
        pos = [(i, i) for i in range(4)]
        a = mil_nce_loss(sim, pos)
        b = mil_nce_loss(sim + 1000.0, pos)
        assert math.isfinite(a) and a == pytest.approx(b, abs=1e-9)

    def test_large_logits_stay_finite(self):
        sim = np.array([[1e4, -1e4], [-1e4, 1e4]])
        loss = mil_nce_loss(sim, [(0, 0), (1, 1)])
        assert math.isfinite(loss)
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_multiple_positives_reduce_loss(self):
        sim = np.zeros((3, 3))
        base = mil_nce_loss(sim, [(i, i) for i in range(3)])
        more = mil_nce_loss(sim, [(i, i) for i in range(3)] + [(0, 1), (1, 0)])
        assert more < base

    def test_better_separation_lowers_loss(self):
        pos = [(0, 0), (1, 1)]
        weak = mil_nce_loss(np.eye(2) * 0.1, pos)
        strong = mil_nce_loss(np.eye(2) * 5.0, pos)
        assert strong < weak

    def test_row_without_positive_rejected(self):
        with pytest.raises(ValueError, match="row 1"):
            mil_nce_loss(np.eye(2), [(0, 0), (0, 1)])

    def test_column_without_positive_rejected(self):
        with pytest.raises(ValueError, match="column 1"):
            mil_nce_loss(np.eye(2), [(0, 0), (1, 0)])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            mil_nce_loss(np.zeros((2, 3)), [(0, 0)])

    def test_out_of_range_pair_rejected(self):
        with pytest.raises(ValueError):
            mil_nce_loss(np.eye(2), [(0, 0), (1, 1), (2, 0)])

    def test_nan_rejected(self):
        sim = np.array([[np.nan, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            mil_nce_loss(sim, [(0, 0), (1, 1)])
