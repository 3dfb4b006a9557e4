"""Binary embedding-matrix files and row-id manifests.

Matrix layout: magic ``SPRB``, u32 version (1), u32 dim, u64 row count,
then ``count * dim`` little-endian float32 values in row-major order.
The id manifest is JSON Lines, one ``{"row": i, "id": "..."}`` object per
row, in row order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import IO, BinaryIO, Sequence

import numpy as np

from spr.errors import FormatError

MATRIX_MAGIC = b"SPRB"
MATRIX_VERSION = 1

_HEADER = struct.Struct("<4sIIQ")


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}: wanted {n} bytes, got {len(data)}")
    return data


def write_matrix(sink: BinaryIO | str | Path, matrix: np.ndarray) -> None:
    """Write a 2-d float32 matrix in the portable binary layout."""
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {matrix.shape}")
    count, dim = matrix.shape
    if dim == 0:
        raise ValueError("matrix dimension must be positive")
    out = np.ascontiguousarray(matrix, dtype="<f4")
    if not np.isfinite(out).all():
        raise ValueError("matrix contains non-finite values")
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            write_matrix(fh, out)
        return
    sink.write(_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, dim, count))
    sink.write(out.tobytes(order="C"))


def read_matrix(source: BinaryIO | str | Path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix`, validating the header."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return read_matrix(fh)
    magic, version, dim, count = _HEADER.unpack(_read_exact(source, _HEADER.size, "matrix header"))
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad matrix magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported matrix version {version}")
    if dim == 0:
        raise FormatError("matrix header declares zero dimension")
    raw = _read_exact(source, count * dim * 4, "matrix payload")
    arr = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    if not np.isfinite(arr).all():
        raise FormatError("matrix payload contains non-finite values")
    return np.ascontiguousarray(arr, dtype=np.float32)


def write_id_manifest(sink: IO[str] | str | Path, ids: Sequence[str]) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_id_manifest(fh, ids)
        return
    for row, ident in enumerate(ids):
        sink.write(json.dumps({"row": row, "id": ident}, separators=(",", ":")) + "\n")


def read_id_manifest(source: IO[str] | str | Path) -> list[str]:
    """Read a row-id manifest, enforcing dense ascending row numbers."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_id_manifest(fh)
    ids: list[str] = []
    for lineno, raw in enumerate(source, start=1):
        line = (raw.decode("utf-8") if isinstance(raw, bytes) else raw).strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"id manifest line {lineno}: invalid JSON ({exc})") from exc
        if not isinstance(record, dict) or "row" not in record or "id" not in record:
            raise FormatError(f"id manifest line {lineno}: expected keys 'row' and 'id'")
        if record["row"] != len(ids):
            raise FormatError(
                f"id manifest line {lineno}: row {record['row']} out of order, expected {len(ids)}"
            )
        ids.append(str(record["id"]))
    if len(set(ids)) != len(ids):
        raise FormatError("id manifest contains duplicate ids")
    return ids
