"""Rasterize automatic-mask-generator output into region rasters.

Each hierarchy level gets one generator configuration (opaque to the
engine; it lands verbatim in the raster's provenance field). Binary masks
are folded into a label image where mask i claims pixels with label i+1
and overlaps go to the lowest mask index; uncovered pixels stay 0.

Mask sources are pluggable: the real generator (``segment_anything``,
imported lazily) or precomputed stacks saved as .npz with a boolean
``masks`` array of shape (Q, H, W).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import rgl


class MaskLevelError(RuntimeError):
    def __init__(self, level: int, cause: Exception):
        super().__init__(f"mask generation failed at hierarchy level {level}: {cause}")
        self.level = level


def rasterize(masks: list[np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Lowest-index-wins label image; first writer keeps each pixel."""
    labels = np.zeros(shape, np.uint32)
    for i, mask in enumerate(masks):
        m = np.asarray(mask, bool)
        if m.shape != tuple(shape):
            raise ValueError(f"mask {i} has shape {m.shape}, expected {tuple(shape)}")
        labels[m & (labels == 0)] = i + 1
    return labels


class NpzStackSource:
    """Mask stacks from one .npz per level (array 'masks', shape Q x H x W)."""

    def __init__(self, paths: list[str]):
        self.paths = [Path(p) for p in paths]

    def __call__(self, image: np.ndarray, config: dict, level: int) -> list[np.ndarray]:
        with np.load(self.paths[level]) as data:
            stack = np.asarray(data["masks"], bool)
        return [stack[i] for i in range(stack.shape[0])]


class SamSource:
    """Wraps the automatic mask generator of a real SAM checkpoint."""

    def __init__(self, checkpoint: str, model_type: str = "vit_h"):
        from segment_anything import SamAutomaticMaskGenerator, sam_model_registry

        self._sam = sam_model_registry[model_type](checkpoint=checkpoint)
        self._make = SamAutomaticMaskGenerator

    def __call__(self, image: np.ndarray, config: dict, level: int) -> list[np.ndarray]:
        generator = self._make(self._sam, **config)
        records = generator.generate(image)
        return [np.asarray(r["segmentation"], bool) for r in records]


def export_hierarchy(image: np.ndarray, configs: list[dict], source, out_dir) -> list[Path]:
    """One raster per generator config, coarse to fine, provenance attached."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = image.shape[:2]
    written = []
    for level, config in enumerate(configs):
        try:
            masks = source(image, config, level)
            labels = rasterize(masks, shape)
        except Exception as exc:
            raise MaskLevelError(level, exc) from exc
        path = out_dir / f"level_{level:02d}.rgl"
        rgl.write(path, labels, provenance=json.dumps(config, sort_keys=True))
        written.append(path)
    return written
