"""Dense prediction: patch-text similarity, upsampling, tiled inference.

A tile is encoded, its patch tokens are scored against the class
embeddings by cosine similarity, the low-resolution score map is
bilinearly upsampled to tile resolution, and overlapping tiles are
reduced by per-pixel arithmetic mean. Tiles always accumulate in raster
order regardless of how many worker threads computed them, so a given
configuration is bit-reproducible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .encoder import EncoderConfig, encode
from .errors import ConfigError, DimensionError, ZeroVectorError
from .numerics import bilinear_upsample, matmul, softmax
from .regions import build_attention_mask, patch_region_index


@dataclass(frozen=True)
class SlidingWindowConfig:
    tile: int = 224
    stride: int = 50
    pad_mode: str = "reflect"  # "none" disables padding; small images then fail
    score_mode: str = "similarity"  # or "probability": softmax scores before averaging

    def __post_init__(self):
        if not (1 <= self.stride <= self.tile):
            raise ConfigError(f"stride {self.stride} outside [1, tile={self.tile}]")
        if self.pad_mode not in ("reflect", "none"):
            raise ConfigError(f"unknown pad mode '{self.pad_mode}'")
        if self.score_mode not in ("similarity", "probability"):
            raise ConfigError(f"unknown score mode '{self.score_mode}'")


def similarity_map(features: np.ndarray, text: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Cosine similarity of every patch token against every class.

    ``features`` is the encoder output including the class token at row 0,
    which is not used; the N patch rows reshape to ``grid``. Returns
    (gh, gw, C) float32 scores in [-1, 1].
    """
    feats = np.asarray(features, np.float32)
    txt = np.asarray(text, np.float32)
    gh, gw = grid
    if feats.shape[0] != gh * gw + 1:
        raise DimensionError(
            f"feature rows {feats.shape[0]} do not match grid {gh}x{gw} plus class token"
        )
    if feats.shape[1] != txt.shape[1]:
        raise DimensionError(
            f"feature dim {feats.shape[1]} != text embedding dim {txt.shape[1]}"
        )
    patches = feats[1:]
    pn = np.sqrt(np.sum(patches * patches, axis=1, keepdims=True))
    tn = np.sqrt(np.sum(txt * txt, axis=1, keepdims=True))
    if np.any(pn == 0.0):
        raise ZeroVectorError("a patch feature has zero norm; similarity undefined")
    if np.any(tn == 0.0):
        raise ZeroVectorError("a class embedding has zero norm; similarity undefined")
    sims = matmul(patches / pn, (txt / tn).T)
    return sims.reshape(gh, gw, txt.shape[0])


def argmax_labels(scores: np.ndarray) -> np.ndarray:
    """Per-pixel winning class; ties go to the lowest class index."""
    return np.argmax(np.asarray(scores), axis=-1).astype(np.int32)


def upsample_and_label(sim_low: np.ndarray, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear per-class upsample then argmax."""
    scores = bilinear_upsample(sim_low, out_h, out_w)
    return scores, argmax_labels(scores)


def tile_offsets(length: int, tile: int, stride: int) -> list[int]:
    """Stride-spaced offsets covering [0, length); the last is clamped."""
    if length < tile:
        raise DimensionError(f"extent {length} smaller than tile {tile}")
    offs = list(range(0, length - tile + 1, stride))
    if offs[-1] != length - tile:
        offs.append(length - tile)
    return offs


def pad_to_tile(array: np.ndarray, tile: int, mode: str = "reflect") -> np.ndarray:
    """Pad bottom/right so both spatial dims reach at least ``tile``."""
    h, w = array.shape[:2]
    ph, pw = max(0, tile - h), max(0, tile - w)
    if ph == 0 and pw == 0:
        return array
    if mode == "none":
        raise DimensionError(
            f"image {h}x{w} is smaller than tile {tile} and padding is disabled"
        )
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, pad, mode=mode)


def tile_hierarchy_provider(rasters: list[np.ndarray], patch: int, tile: int, pad_mode: str = "reflect"):
    """Closure mapping a tile origin to its attention-mask hierarchy.

    Full-image label rasters are padded the same way the image is, then
    cropped per tile; region labels stay globally consistent, which is all
    the equality-based mask construction needs. An empty raster list maps
    every tile to None (no masking).
    """
    if not rasters:
        return lambda y0, x0: None
    padded = [pad_to_tile(np.asarray(r, np.uint32), tile, pad_mode) for r in rasters]

    def provider(y0: int, x0: int):
        return [
            build_attention_mask(patch_region_index(r[y0 : y0 + tile, x0 : x0 + tile], patch))
            for r in padded
        ]

    return provider


def sliding_window_segment(
    image: np.ndarray,
    ckpt: Checkpoint,
    cfg: EncoderConfig,
    swc: SlidingWindowConfig,
    text: np.ndarray,
    mask_source=None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Tiled dense prediction over a whole image.

    ``mask_source(y0, x0)`` must yield the hierarchy for the tile at that
    origin (None for unmasked operation). Returns (scores, labels) at the
    original image resolution; each pixel's score is the mean over the
    tiles that cover it.
    """
    img = np.asarray(image, np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got shape {img.shape}")
    h, w = img.shape[:2]
    tile = swc.tile
    if tile % cfg.patch:
        raise ConfigError(f"tile {tile} not divisible by patch size {cfg.patch}")
    padded = pad_to_tile(img, tile, swc.pad_mode)
    ph, pw = padded.shape[:2]
    ys = tile_offsets(ph, tile, swc.stride)
    xs = tile_offsets(pw, tile, swc.stride)
    origins = [(y0, x0) for y0 in ys for x0 in xs]
    grid = (tile // cfg.patch, tile // cfg.patch)
    if mask_source is None:
        def mask_source(y0, x0):
            return None

    def run_tile(origin: tuple[int, int]) -> np.ndarray:
        y0, x0 = origin
        feats = encode(padded[y0 : y0 + tile, x0 : x0 + tile], ckpt, cfg, mask_source(y0, x0))
        low = similarity_map(feats, text, grid)
        scores = bilinear_upsample(low, tile, tile)
        if swc.score_mode == "probability":
            scores = softmax(scores)
        return scores

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tiles = list(pool.map(run_tile, origins))
    else:
        tiles = [run_tile(o) for o in origins]

    c = text.shape[0]
    acc = np.zeros((ph, pw, c), np.float32)
    counts = np.zeros((ph, pw), np.uint32)
    for (y0, x0), scores in zip(origins, tiles):
        acc[y0 : y0 + tile, x0 : x0 + tile] += scores
        counts[y0 : y0 + tile, x0 : x0 + tile] += 1
    averaged = acc / counts[:, :, None].astype(np.float32)
    averaged = averaged[:h, :w]
    return averaged, argmax_labels(averaged)
