"""Binary checkpoint format for named float32 parameter blobs.

Layout (little-endian)::

    b"EFLOCKPT"  u32 version  u32 count
    count x { u32 name_len, name (utf-8), u32 rank, rank x u32 extent, float32 data }
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"EFLOCKPT"
VERSION = 1


def save_checkpoint(path, params: dict) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        arr = np.asarray(getattr(value, "data", value), dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = take("<I")
        if off + nlen > len(data):
            raise CheckpointError(f"{path}: truncated name at byte {off}")
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if off + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated data for {name!r}")
        out[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return out
