"""Writer for the engine's region raster format (".rgl")."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"RGL1"


def write(path, labels: np.ndarray, provenance: str = "") -> None:
    arr = np.ascontiguousarray(labels, dtype="<u4")
    if arr.ndim != 2:
        raise ValueError(f"region raster must be 2-D, got shape {arr.shape}")
    prov = provenance.encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())
        f.write(struct.pack("<H", len(prov)))
        f.write(prov)


def read(path) -> tuple[np.ndarray, str]:
    from pathlib import Path

    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a region raster")
    h, w = struct.unpack_from("<II", raw, 4)
    labels = np.frombuffer(raw, dtype="<u4", count=h * w, offset=12).reshape(h, w).copy()
    pos = 12 + 4 * h * w
    (plen,) = struct.unpack_from("<H", raw, pos)
    return labels, raw[pos + 2 : pos + 2 + plen].decode("utf-8")
