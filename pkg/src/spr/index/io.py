"""Single-file index persistence with integrity checking.

Layout: magic ``SPRI``, u32 version (1), u8 kind (0 flat, 1 ivf,
2 ivfpq), u32 dim, u64 row count, then a kind-specific payload
(codebooks before per-row data), then the CRC32 of the payload as a
trailing u32. All integers little-endian.
"""

from __future__ import annotations

import io
import struct
import zlib
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from spr.errors import FormatError
from spr.index.flat import FlatIndex
from spr.index.ivf import IVFIndex
from spr.index.ivfpq import IVFPQIndex
from spr.index.kmeans import Codebook

INDEX_MAGIC = b"SPRI"
INDEX_VERSION = 1

_KIND_CODES = {"flat": 0, "ivf": 1, "ivfpq": 2}
_KIND_NAMES = {code: name for name, code in _KIND_CODES.items()}

_HEADER = struct.Struct("<4sIBIQ")

AnyIndex = Union[FlatIndex, IVFIndex, IVFPQIndex]


def _pack_ids(ids: tuple[str, ...]) -> bytes:
    out = io.BytesIO()
    for ident in ids:
        raw = ident.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"id too long to serialize: {ident[:32]!r}...")
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
    return out.getvalue()


def _unpack_ids(buf: memoryview, count: int) -> tuple[tuple[str, ...], int]:
    ids = []
    pos = 0
    for _ in range(count):
        if pos + 2 > len(buf):
            raise FormatError("truncated id block")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + length > len(buf):
            raise FormatError("truncated id block")
        ids.append(bytes(buf[pos : pos + length]).decode("utf-8"))
        pos += length
    return tuple(ids), pos


def _payload_flat(index: FlatIndex) -> bytes:
    return _pack_ids(index.ids) + np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()


def _payload_ivf(index: IVFIndex) -> bytes:
    head = struct.pack("<Id", index.nlist, index.codebook.inertia)
    centroids = np.ascontiguousarray(index.codebook.centroids, dtype="<f4").tobytes()
    assigns = np.ascontiguousarray(index.assignments, dtype="<u4").tobytes()
    matrix = np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()
    return _pack_ids(index.ids) + head + centroids + assigns + matrix


def _payload_ivfpq(index: IVFPQIndex) -> bytes:
    head = struct.pack("<Id", index.nlist, index.codebook.inertia)
    centroids = np.ascontiguousarray(index.codebook.centroids, dtype="<f4").tobytes()
    pq_head = struct.pack("<BB", index.m, int(index.ksub).bit_length() - 1)
    books = np.ascontiguousarray(index.sub_codebooks, dtype="<f4").tobytes()
    assigns = np.ascontiguousarray(index.assignments, dtype="<u4").tobytes()
    codes = np.ascontiguousarray(index.codes, dtype=np.uint8).tobytes()
    return _pack_ids(index.ids) + head + centroids + pq_head + books + assigns + codes


def save_index(sink: BinaryIO | str | Path, index: AnyIndex) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            save_index(fh, index)
        return
    kind = _KIND_CODES[index.kind]
    if index.kind == "flat":
        payload = _payload_flat(index)  # type: ignore[arg-type]
    elif index.kind == "ivf":
        payload = _payload_ivf(index)  # type: ignore[arg-type]
    else:
        payload = _payload_ivfpq(index)  # type: ignore[arg-type]
    sink.write(_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, kind, index.dim, len(index)))
    sink.write(payload)
    sink.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def _take(buf: memoryview, pos: int, nbytes: int, what: str) -> tuple[memoryview, int]:
    if pos + nbytes > len(buf):
        raise FormatError(f"truncated payload while reading {what}")
    return buf[pos : pos + nbytes], pos + nbytes


def load_index(source: BinaryIO | str | Path) -> AnyIndex:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_index(fh)
    header = source.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise FormatError("truncated index header")
    magic, version, kind_code, dim, count = _HEADER.unpack(header)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad index magic {magic!r}, expected {INDEX_MAGIC!r}")
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")
    if kind_code not in _KIND_NAMES:
        raise FormatError(f"unknown index kind code {kind_code}")
    if dim == 0 or count == 0:
        raise FormatError("index header declares an empty index")
    rest = source.read()
    if len(rest) < 4:
        raise FormatError("truncated index file: missing checksum")
    payload, trailer = rest[:-4], rest[-4:]
    (expected_crc,) = struct.unpack("<I", trailer)
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if actual_crc != expected_crc:
        raise FormatError(f"index checksum mismatch: stored {expected_crc:#x}, computed {actual_crc:#x}")
    buf = memoryview(payload)
    ids, pos = _unpack_ids(buf, count)
    kind = _KIND_NAMES[kind_code]
    if kind == "flat":
        raw, pos = _take(buf, pos, count * dim * 4, "matrix")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
        _expect_end(buf, pos)
        return FlatIndex(ids, matrix)
    head, pos = _take(buf, pos, 12, "ivf header")
    nlist, inertia = struct.unpack("<Id", head)
    if nlist == 0 or nlist > count:
        raise FormatError(f"invalid nlist {nlist} for {count} rows")
    raw, pos = _take(buf, pos, nlist * dim * 4, "coarse centroids")
    centroids = np.frombuffer(raw, dtype="<f4").reshape(nlist, dim)
    codebook = Codebook(np.ascontiguousarray(centroids), float(inertia))
    if kind == "ivf":
        raw, pos = _take(buf, pos, count * 4, "assignments")
        assigns = np.frombuffer(raw, dtype="<u4").astype(np.int64)
        _check_assignments(assigns, nlist)
        raw, pos = _take(buf, pos, count * dim * 4, "matrix")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
        _expect_end(buf, pos)
        return IVFIndex(ids, matrix, codebook, assigns)
    head, pos = _take(buf, pos, 2, "pq header")
    m, nbits = struct.unpack("<BB", head)
    if m == 0 or dim % m != 0:
        raise FormatError(f"pq sub-space count {m} does not divide dim {dim}")
    if not 1 <= nbits <= 8:
        raise FormatError(f"pq nbits {nbits} out of range")
    ksub = 1 << nbits
    dsub = dim // m
    raw, pos = _take(buf, pos, m * ksub * dsub * 4, "sub-codebooks")
    books = np.frombuffer(raw, dtype="<f4").reshape(m, ksub, dsub)
    raw, pos = _take(buf, pos, count * 4, "assignments")
    assigns = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    _check_assignments(assigns, nlist)
    raw, pos = _take(buf, pos, count * m, "codes")
    codes = np.frombuffer(raw, dtype=np.uint8).reshape(count, m)
    if codes.size and int(codes.max()) >= ksub:
        raise FormatError("pq code exceeds codebook size")
    _expect_end(buf, pos)
    return IVFPQIndex(ids, dim, codebook, assigns, np.ascontiguousarray(books), codes)


def _check_assignments(assigns: np.ndarray, nlist: int) -> None:
    if assigns.size and int(assigns.max()) >= nlist:
        raise FormatError("row assignment exceeds list count")


def _expect_end(buf: memoryview, pos: int) -> None:
    if pos != len(buf):
        raise FormatError(f"unexpected {len(buf) - pos} trailing payload bytes")
