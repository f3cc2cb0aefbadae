"""Serializer for the engine's tensor container format.

Independent implementation of the ".ckpt1" layout (see the engine README):
magic "CKPT1", u32 tensor count, per tensor sorted by name a u16-length
UTF-8 name, u8 rank, rank u32 dims, raw float32 little-endian data, then a
trailing UTF-8 JSON metadata blob. Writing the same content always yields
the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT1"


class ContainerError(ValueError):
    pass


def write(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    out = bytearray(MAGIC)
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        if arr.ndim < 1 or min(arr.shape) < 1:
            raise ContainerError(f"tensor '{name}' has invalid shape {arr.shape}")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(bytes(out))


def read(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ContainerError(f"{path}: not a tensor container")
    (count,) = struct.unpack_from("<I", raw, 5)
    pos = 9
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims))
        tensors[name] = (
            np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        )
        pos += 4 * n
    meta = json.loads(raw[pos:].decode("utf-8")) if raw[pos:] else {}
    return tensors, meta
