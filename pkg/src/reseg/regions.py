"""Region rasters, patch-level region indices, and region attention masks.

A region label image assigns every pixel a u32 region index (0 means
background). Patch indices come from majority voting over each P x P
block; attention masks allow interaction only between patch tokens that
share a region index, with the leading token (index 0) kept isolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class RegionLabelImage:
    """Pixel-level region labels plus the generator config that produced them."""

    labels: np.ndarray  # u32, (H, W)
    provenance: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.labels, dtype=np.uint32))
        if arr.ndim != 2:
            raise DimensionError(f"region labels must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def max_label(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0


def combine_masks(
    masks: Sequence[np.ndarray], provenance: str = "", shape: tuple[int, int] | None = None
) -> RegionLabelImage:
    """Fold binary region masks into one label image.

    Mask i claims its pixels with label i + 1; uncovered pixels stay 0.
    Overlaps resolve to the lowest mask index (applied high-to-low so the
    lowest write wins). With an empty mask list the result is all
    background, which needs an explicit ``shape``.
    """
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if masks:
        if shape is None:
            shape = masks[0].shape
        for i, m in enumerate(masks):
            if m.ndim != 2 or m.shape != tuple(shape):
                raise DimensionError(f"mask {i} has shape {m.shape}, expected {tuple(shape)}")
    elif shape is None:
        raise DimensionError("combine_masks with zero masks needs an explicit shape")
    labels = np.zeros(shape, dtype=np.uint32)
    for i in range(len(masks) - 1, -1, -1):
        labels[masks[i]] = i + 1
    return RegionLabelImage(labels, provenance)


def patch_region_index(labels, patch: int) -> np.ndarray:
    """Dominant region index of each P x P patch, majority vote.

    Ties break to the smallest label value; background (0) counts like any
    other label. Image dims must be multiples of ``patch``.
    """
    arr = labels.labels if isinstance(labels, RegionLabelImage) else np.asarray(labels, np.uint32)
    if arr.ndim != 2:
        raise DimensionError(f"label raster must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    if patch < 1 or h % patch or w % patch:
        raise DimensionError(
            f"raster {h}x{w} is not divisible by patch size {patch}; pad or crop first"
        )
    rows, cols = h // patch, w // patch
    blocks = arr.reshape(rows, patch, cols, patch).transpose(0, 2, 1, 3).reshape(rows, cols, -1)
    out = np.empty((rows, cols), dtype=np.uint32)
    for i in range(rows):
        for j in range(cols):
            counts = np.bincount(blocks[i, j])
            out[i, j] = np.argmax(counts)  # first max == smallest label
    return out


def build_attention_mask(ri: np.ndarray) -> np.ndarray:
    """(N+1) x (N+1) boolean mask from a patch region-index grid.

    Token 0 attends only to itself; patch tokens a, b attend iff their
    region indices are equal (background matches background).
    """
    flat = np.asarray(ri, np.uint32).reshape(-1)
    n = flat.size
    bits = np.zeros((n + 1, n + 1), dtype=bool)
    bits[0, 0] = True
    bits[1:, 1:] = flat[:, None] == flat[None, :]
    return bits


def build_hierarchy(label_images: Sequence, patch: int) -> list[np.ndarray]:
    """Per-level attention masks, order preserved (coarse first)."""
    rasters = [
        li.labels if isinstance(li, RegionLabelImage) else np.asarray(li, np.uint32)
        for li in label_images
    ]
    if rasters:
        shape = rasters[0].shape
        for i, r in enumerate(rasters):
            if r.shape != shape:
                raise DimensionError(f"hierarchy level {i} has shape {r.shape}, expected {shape}")
    return [build_attention_mask(patch_region_index(r, patch)) for r in rasters]
