"""Synthetic fixtures: seeded toy checkpoints and Voronoi region rasters.

Both exist so the whole pipeline can run and be tested with zero external
data. Everything here is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint, parameter_shapes
from .errors import DimensionError
from .regions import RegionLabelImage
from .rng import SplitMix64, substream_seed


def _fill(stream: SplitMix64, shape: tuple[int, ...], scale: float, offset: float = 0.0) -> np.ndarray:
    n = int(np.prod(shape))
    vals = np.empty(n, dtype=np.float32)
    for i in range(n):
        vals[i] = stream.next_float()
    return ((vals - np.float32(0.5)) * np.float32(scale) + np.float32(offset)).reshape(shape)


def synthetic_checkpoint(
    dim: int = 8,
    layers: int = 2,
    patch: int = 2,
    heads: int = 2,
    grid: int = 2,
    mlp_ratio: float = 4.0,
    seed: int = 0,
    proj_dim: int | None = None,
    scale: float = 0.4,
) -> Checkpoint:
    """Deterministic random checkpoint for a ``grid x grid``-patch input.

    Tensors are filled in sorted canonical-name order from one SplitMix64
    stream, so a (seed, architecture) pair always yields the same bytes.
    Layer-norm gains sit near 1, everything else near 0.
    """
    tokens = grid * grid + 1
    shapes = parameter_shapes(dim, layers, patch, mlp_ratio, tokens, proj_dim)
    stream = SplitMix64(seed)
    tensors = {}
    for name in sorted(shapes):
        if name.endswith("gamma"):
            tensors[name] = _fill(stream, shapes[name], 0.1, offset=1.0)
        else:
            tensors[name] = _fill(stream, shapes[name], scale)
    meta = {
        "model_id": f"synthetic-{seed}",
        "dim": dim,
        "layers": layers,
        "patch": patch,
        "heads": heads,
        "mlp_ratio": mlp_ratio,
        "seed": seed,
        "preprocess": {"mean": [0.0, 0.0, 0.0], "std": [1.0, 1.0, 1.0]},
    }
    return Checkpoint(tensors, meta)


def synthetic_image(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Deterministic float32 (H, W, 3) image with values in [0, 1)."""
    stream = SplitMix64(seed)
    n = height * width * 3
    vals = np.empty(n, dtype=np.float32)
    for i in range(n):
        vals[i] = stream.next_float()
    return vals.reshape(height, width, 3)


def voronoi_labels(height: int, width: int, regions: int, seed: int = 0) -> np.ndarray:
    """Label raster of nearest-seed-point cells, labels 1..regions.

    Seed points are distinct pixels; distance ties go to the lowest point
    index, so the raster is a pure function of (dims, regions, seed) with
    integer arithmetic only.
    """
    if height < 1 or width < 1:
        raise DimensionError(f"raster needs positive dims, got {height}x{width}")
    if regions < 1 or regions > height * width:
        raise DimensionError(f"cannot place {regions} distinct points on {height}x{width}")
    stream = SplitMix64(seed)
    chosen: list[int] = []
    seen = set()
    while len(chosen) < regions:
        cell = stream.next_index(height * width)
        if cell not in seen:
            seen.add(cell)
            chosen.append(cell)
    points = np.array([divmod(c, width) for c in chosen], dtype=np.int64)
    yy = np.arange(height, dtype=np.int64)[:, None]
    xx = np.arange(width, dtype=np.int64)[None, :]
    best = np.full((height, width), np.iinfo(np.int64).max, dtype=np.int64)
    labels = np.zeros((height, width), dtype=np.uint32)
    for idx, (py, px) in enumerate(points):
        d = (yy - py) ** 2 + (xx - px) ** 2
        closer = d < best  # strict: earlier (lower) index wins ties
        best[closer] = d[closer]
        labels[closer] = idx + 1
    return labels


def voronoi_hierarchy(
    height: int, width: int, counts: list[int], seed: int = 0
) -> list[RegionLabelImage]:
    """Coarse-to-fine Voronoi label images; counts must strictly increase."""
    for prev, cur in zip(counts, counts[1:]):
        if cur <= prev:
            raise DimensionError(f"region counts must strictly increase, got {counts}")
    out = []
    for level, n in enumerate(counts):
        labels = voronoi_labels(height, width, n, seed=substream_seed(seed, level))
        out.append(
            RegionLabelImage(labels, provenance=f"voronoi seed={seed} level={level} regions={n}")
        )
    return out
