"""On-disk formats: the tensor container, region rasters, and image IO.

Tensor container (".ckpt1"), all integers little-endian:

    magic   5 bytes  b"CKPT1"
    count   u32      number of tensors
    per tensor, in ascending name order:
        name_len  u16     UTF-8 byte length
        name      bytes
        rank      u8
        dims      rank x u32   (every dim >= 1)
        data      prod(dims) x f32
    meta    UTF-8 JSON blob, everything after the last tensor

Region raster (".rgl"):

    magic       4 bytes  b"RGL1"
    height      u32
    width       u32
    labels      height*width x u32, row-major
    prov_len    u16
    provenance  UTF-8 bytes

Writers are canonical (sorted tensor names, sorted JSON keys), so identical
content always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CheckpointError, DataError, DimensionError
from .regions import RegionLabelImage

CONTAINER_MAGIC = b"CKPT1"
RGL_MAGIC = b"RGL1"


def write_container(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    blob = bytearray()
    blob += CONTAINER_MAGIC
    blob += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        if arr.ndim < 1 or any(d < 1 for d in arr.shape):
            raise CheckpointError(f"tensor '{name}' has invalid shape {arr.shape}")
        if arr.ndim > 255:
            raise CheckpointError(f"tensor '{name}' rank {arr.ndim} exceeds format limit")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    blob += json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    path.write_bytes(bytes(blob))


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != CONTAINER_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a tensor container")
    off = 5
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            if rank < 1 or any(d < 1 for d in dims):
                raise CheckpointError(f"{path}: tensor '{name}' has invalid dims {dims}")
            n = int(np.prod(dims))
            data = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
            off += 4 * n
            tensors[name] = data.reshape(dims).astype(np.float32)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated container ({exc})") from exc
    tail = raw[off:]
    meta = json.loads(tail.decode("utf-8")) if tail else {}
    return tensors, meta


def write_rgl(path, labels: np.ndarray, provenance: str = "") -> None:
    arr = np.ascontiguousarray(np.asarray(labels, dtype="<u4"))
    if arr.ndim != 2:
        raise DimensionError(f"region raster must be 2-D, got shape {arr.shape}")
    prov = provenance.encode("utf-8")
    if len(prov) > 0xFFFF:
        raise DataError("provenance string exceeds 64 KiB")
    with open(path, "wb") as f:
        f.write(RGL_MAGIC)
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())
        f.write(struct.pack("<H", len(prov)))
        f.write(prov)


def read_rgl(path) -> RegionLabelImage:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != RGL_MAGIC:
        raise DataError(f"{path}: bad magic, not a region raster")
    try:
        h, w = struct.unpack_from("<II", raw, 4)
        off = 12
        labels = np.frombuffer(raw, dtype="<u4", count=h * w, offset=off).reshape(h, w)
        off += 4 * h * w
        (plen,) = struct.unpack_from("<H", raw, off)
        off += 2
        prov = raw[off : off + plen].decode("utf-8")
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated region raster ({exc})") from exc
    return RegionLabelImage(labels.astype(np.uint32), prov)


def read_label_png(path) -> np.ndarray:
    """16-bit (or 8-bit) grayscale PNG where pixel value = label index."""
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I", "L"):
            raise DataError(f"{path}: label PNG must be grayscale, got mode {im.mode}")
        arr = np.asarray(im)
    return arr.astype(np.uint32)


def write_label_png(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise DimensionError(f"label map must be 2-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise DataError("label values do not fit a 16-bit PNG")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


def load_region_raster(path) -> RegionLabelImage:
    """Region labels from .rgl or 16-bit grayscale PNG."""
    path = Path(path)
    if path.suffix.lower() == ".rgl":
        return read_rgl(path)
    return RegionLabelImage(read_label_png(path), provenance=f"png:{path.name}")


def load_image_rgb(path) -> np.ndarray:
    """PNG/PPM image as float32 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / np.float32(255.0)
