"""Vision encoder: patch embedding and pre-norm transformer blocks with
optional region-constrained attention in the final layers.

The first L - masked_layers blocks run standard self-attention; block
L - masked_layers + r applies the r-th hierarchy mask by excluding
disallowed token pairs from the softmax (exact zeros, mathematically the
same as a -inf logit bias). Passing no mask and passing an all-allowed
mask take the identical code path, so the two are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, validate_parameters
from .errors import ConfigError, DimensionError
from .numerics import gelu, layer_norm, linear, masked_softmax, matmul


@dataclass(frozen=True)
class EncoderConfig:
    layers: int
    masked_layers: int
    dim: int
    patch: int
    heads: int
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if not (0 <= self.masked_layers <= self.layers):
            raise ConfigError(
                f"masked_layers {self.masked_layers} outside [0, layers={self.layers}]"
            )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, masked_layers: int = 0) -> "EncoderConfig":
        arch = ckpt.arch()
        return cls(
            layers=int(arch["layers"]),
            masked_layers=masked_layers,
            dim=int(arch["dim"]),
            patch=int(arch["patch"]),
            heads=int(arch["heads"]),
            mlp_ratio=float(arch["mlp_ratio"]),
        )


def patch_embed(image: np.ndarray, ckpt: Checkpoint, cfg: EncoderConfig) -> np.ndarray:
    """Flatten P x P x 3 patches, project, prepend the class token, add
    positional embeddings. Returns (N+1, D) with row 0 the class token."""
    img = np.asarray(image, np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got shape {img.shape}")
    h, w, _ = img.shape
    p = cfg.patch
    if h % p or w % p:
        raise DimensionError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    n = gh * gw
    pos = ckpt.tensors["pos_embed"]
    if pos.shape[0] != n + 1:
        raise DimensionError(
            f"positional embedding covers {pos.shape[0]} tokens but image yields {n + 1}"
        )
    patches = (
        img.reshape(gh, p, gw, p, 3).transpose(0, 2, 1, 3, 4).reshape(n, p * p * 3)
    )
    tok = linear(patches, ckpt.tensors["patch_proj.weight"], ckpt.tensors["patch_proj.bias"])
    z = np.concatenate([ckpt.tensors["cls_token"][None, :], tok], axis=0)
    return z + pos


def _attention(x: np.ndarray, params: dict, heads: int, mask) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head self-attention; returns (output, head-averaged weights)."""
    n, dim = x.shape
    dh = dim // heads
    scale = np.float32(1.0 / np.sqrt(dh))
    q = linear(x, params["q.weight"], params["q.bias"])
    k = linear(x, params["k.weight"], params["k.bias"])
    v = linear(x, params["v.weight"], params["v.bias"])
    ctx = np.empty((n, dim), np.float32)
    averaged = np.zeros((n, n), np.float32)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        logits = matmul(q[:, sl], k[:, sl].T) * scale
        weights = masked_softmax(logits, mask)
        ctx[:, sl] = matmul(weights, v[:, sl])
        averaged += weights
    averaged /= np.float32(heads)
    out = linear(ctx, params["out.weight"], params["out.bias"])
    return out, averaged


def encoder_block(
    tokens: np.ndarray,
    params: dict,
    heads: int,
    mask: np.ndarray | None = None,
    attn_sink: list | None = None,
) -> np.ndarray:
    """One pre-norm transformer block; mask=None means unrestricted."""
    if mask is not None and mask.shape != (tokens.shape[0], tokens.shape[0]):
        raise DimensionError(
            f"attention mask shape {mask.shape} does not fit {tokens.shape[0]} tokens"
        )
    y = layer_norm(tokens, params["ln1.gamma"], params["ln1.beta"])
    attn_out, weights = _attention(y, params, heads, mask)
    if attn_sink is not None:
        attn_sink.append(weights)
    x = tokens + attn_out
    y = layer_norm(x, params["ln2.gamma"], params["ln2.beta"])
    hidden = gelu(linear(y, params["mlp.fc1.weight"], params["mlp.fc1.bias"]))
    return x + linear(hidden, params["mlp.fc2.weight"], params["mlp.fc2.bias"])


def layer_params(ckpt: Checkpoint, index: int) -> dict:
    """View of one block's tensors keyed by their within-block names."""
    prefix = f"blocks.{index}."
    return {
        name[len(prefix) :].replace("attn.", ""): arr
        for name, arr in ckpt.tensors.items()
        if name.startswith(prefix)
    }


def encode(
    image: np.ndarray,
    ckpt: Checkpoint,
    cfg: EncoderConfig,
    hierarchy: list | None = None,
    attention_out: list | None = None,
) -> np.ndarray:
    """Full forward pass; returns all token features, row 0 = class token.

    ``hierarchy`` holds one (N+1) x (N+1) boolean mask per masked layer,
    coarse first; layer L - masked_layers + r uses hierarchy[r]. When
    ``attention_out`` is a list, each block appends its head-averaged
    post-softmax attention matrix to it.
    """
    validate_parameters(ckpt)
    levels = list(hierarchy) if hierarchy is not None else []
    if len(levels) != cfg.masked_layers:
        raise ConfigError(
            f"hierarchy has {len(levels)} masks but config expects {cfg.masked_layers}"
        )
    tokens = patch_embed(image, ckpt, cfg)
    unmasked = cfg.layers - cfg.masked_layers
    for i in range(cfg.layers):
        mask = levels[i - unmasked] if i >= unmasked else None
        tokens = encoder_block(tokens, layer_params(ckpt, i), cfg.heads, mask, attention_out)
    tokens = layer_norm(tokens, ckpt.tensors["ln_final.gamma"], ckpt.tensors["ln_final.beta"])
    if "proj" in ckpt.tensors:
        tokens = matmul(tokens, ckpt.tensors["proj"])
    return tokens
