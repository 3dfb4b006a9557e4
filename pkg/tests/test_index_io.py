import io

import numpy as np
import pytest

from spr.embedding import EmbeddingTable
from spr.errors import FormatError
from spr.index import SearchParams, build_flat, build_ivf, build_ivfpq, load_index, save_index

from conftest import unit_rows


def make_table(n=300, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable([f"s{i:04d}" for i in range(n)], unit_rows(rng, n, dim), renormalize=False)


def serialized(index) -> bytes:
    buf = io.BytesIO()
    save_index(buf, index)
    return buf.getvalue()


def queries(num=8, dim=16, seed=99):
    rng = np.random.default_rng(seed)
    return unit_rows(rng, num, dim)


def assert_same_results(a, b, dim=16, nprobe=4):
    for q in queries(dim=dim):
        ha = a.search(q, SearchParams(top_k=15, nprobe=nprobe))
        hb = b.search(q, SearchParams(top_k=15, nprobe=nprobe))
        assert [h.id for h in ha] == [h.id for h in hb]
        for x, y in zip(ha, hb):
            assert x.score == pytest.approx(y.score, abs=1e-6)


class TestRoundTrip:
    def test_flat(self, tmp_path):
        index = build_flat(make_table())
        path = tmp_path / "flat.spri"
        save_index(path, index)
        loaded = load_index(path)
        assert loaded.kind == "flat"
        assert loaded.ids == index.ids
        np.testing.assert_array_equal(loaded.matrix, index.matrix)
        assert_same_results(index, loaded)

    def test_ivf(self, tmp_path):
        index = build_ivf(make_table(), nlist=8)
        path = tmp_path / "ivf.spri"
        save_index(path, index)
        loaded = load_index(path)
        assert loaded.kind == "ivf"
        assert loaded.nlist == 8
        np.testing.assert_array_equal(loaded.assignments, index.assignments)
        np.testing.assert_array_equal(loaded.codebook.centroids, index.codebook.centroids)
        assert loaded.codebook.inertia == pytest.approx(index.codebook.inertia, rel=1e-12)
        assert_same_results(index, loaded)

    def test_ivfpq(self, tmp_path):
        index = build_ivfpq(make_table(), nlist=4, m=4, nbits=5)
        path = tmp_path / "pq.spri"
        save_index(path, index)
        loaded = load_index(path)
        assert loaded.kind == "ivfpq"
        assert loaded.m == 4 and loaded.ksub == 32
        np.testing.assert_array_equal(loaded.codes, index.codes)
        np.testing.assert_array_equal(loaded.sub_codebooks, index.sub_codebooks)
        assert_same_results(index, loaded)

    def test_unicode_ids_survive(self):
        rng = np.random.default_rng(1)
        table = EmbeddingTable(["vidéo#0", "动画#1"], unit_rows(rng, 2, 8), renormalize=False)
        loaded = load_index(io.BytesIO(serialized(build_flat(table))))
        assert loaded.ids == ("vidéo#0", "动画#1")


class TestCorruption:
    def test_bad_magic(self):
        raw = bytearray(serialized(build_flat(make_table(50))))
        raw[:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic"):
            load_index(io.BytesIO(bytes(raw)))

    def test_bad_version(self):
        raw = bytearray(serialized(build_flat(make_table(50))))
        raw[4] = 2
        with pytest.raises(FormatError, match="version"):
            load_index(io.BytesIO(bytes(raw)))

    def test_bad_kind(self):
        raw = bytearray(serialized(build_flat(make_table(50))))
        raw[8] = 7
        with pytest.raises(FormatError, match="kind"):
            load_index(io.BytesIO(bytes(raw)))

    def test_flipped_payload_byte_caught_by_checksum(self):
        raw = bytearray(serialized(build_flat(make_table(50))))
        raw[len(raw) // 2] ^= 0xFF
        with pytest.raises(FormatError, match="checksum"):
            load_index(io.BytesIO(bytes(raw)))

    def test_truncated_file(self):
        raw = serialized(build_flat(make_table(50)))
        with pytest.raises(FormatError):
            load_index(io.BytesIO(raw[: len(raw) // 2]))

    def test_truncated_header(self):
        with pytest.raises(FormatError, match="header"):
            load_index(io.BytesIO(b"SPRI\x01"))

    def test_empty_file(self):
        with pytest.raises(FormatError):
            load_index(io.BytesIO(b""))

    def test_checksum_itself_corrupted(self):
        raw = bytearray(serialized(build_ivf(make_table(100), nlist=4)))
        raw[-1] ^= 0x01
        with pytest.raises(FormatError, match="checksum"):
            load_index(io.BytesIO(bytes(raw)))
