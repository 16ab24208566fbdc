"""Flat binary parameter container.

Layout (all integers little-endian)::

    b"PGFPARAM"                       8-byte magic
    uint32  format version            (FORMAT_VERSION)
    uint32  metadata length in bytes
    bytes   metadata, UTF-8 JSON      (may be "{}")
    uint32  entry count
    per entry:
        uint32  name length, then UTF-8 name (dotted parameter path)
        uint32  ndim, then ndim x uint64 dims
        prod(dims) x float64 ('<f8') payload, row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PGFPARAM"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_parameters(path, params: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta,
              struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_parameters(path) -> tuple[dict[str, np.ndarray], dict]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos} (needed {n} more bytes)")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(8) != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    version, meta_len = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    metadata = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes after last entry")
    return params, metadata
