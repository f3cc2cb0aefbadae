"""Dense float32 kernels shared by every stage of the pipeline.

All kernels are pure functions over float32 arrays. Where a contract pins
the accumulation order (matmul, softmax denominators) the reduction runs
as an explicit left-to-right loop so results match a naive scalar oracle
bit for bit; everything else uses numpy reductions, which are still
deterministic for a fixed input shape.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import DegenerateMaskError, DimensionError, ZeroVectorError

_F32 = np.float32


def _as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=_F32))


def matmul(a, b) -> np.ndarray:
    """Matrix product with left-to-right accumulation over the inner axis.

    Equivalent to the naive triple loop ``out[i, j] += a[i, k] * b[k, j]``
    with k increasing, and exactly equal to it in float32.
    """
    a = _as_f32(a)
    b = _as_f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=_F32)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def linear(x, weight, bias=None) -> np.ndarray:
    """x @ weight (+ bias). Weight is stored input-dim x output-dim."""
    out = matmul(x, weight)
    if bias is not None:
        out = out + _as_f32(bias)
    return out


def masked_softmax(logits, mask=None) -> np.ndarray:
    """Row softmax restricted to allowed entries.

    Masked positions are excluded from the normalization entirely (their
    logits are driven to -inf before exponentiation), so they come out as
    exact zeros, and the allowed entries of each row sum to 1. ``mask`` is
    a boolean array matching the trailing two axes of ``logits``; None
    means everything is allowed. A row with no allowed entries cannot be
    normalized and raises DegenerateMaskError.
    """
    x = _as_f32(logits)
    if x.ndim < 2:
        raise DimensionError(f"masked_softmax expects >= 2-D logits, got shape {x.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape[-2:]:
            raise DimensionError(
                f"mask shape {m.shape} does not match logit rows {x.shape[-2:]}"
            )
        if not m.any(axis=-1).all():
            raise DegenerateMaskError("attention mask has a row with no allowed entries")
        x = np.where(m, x, _F32(-np.inf))
    high = np.max(x, axis=-1, keepdims=True)
    expd = np.exp(x - high)  # masked entries: exp(-inf) == 0 exactly
    denom = np.zeros(expd.shape[:-1], dtype=_F32)
    for j in range(expd.shape[-1]):
        denom = denom + expd[..., j]
    return expd / denom[..., None]


def softmax(logits) -> np.ndarray:
    """Plain row softmax (identical code path to an all-allowed mask)."""
    return masked_softmax(logits, None)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Normalize over the last axis, then scale and shift."""
    x = _as_f32(x)
    gamma = _as_f32(gamma)
    beta = _as_f32(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match last dim {x.shape[-1]}"
        )
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + _F32(eps)) * gamma + beta


def gelu(x) -> np.ndarray:
    """Exact GELU, 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = _as_f32(x)
    return _F32(0.5) * x * (_F32(1.0) + erf(x * _F32(1.0 / np.sqrt(2.0))))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two nonzero vectors."""
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise DimensionError(f"cosine_similarity vectors differ in length: {av.size} vs {bv.size}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    return float(np.dot(av, bv) / (na * nb))


def bilinear_upsample(src, out_h: int, out_w: int) -> np.ndarray:
    """Channel-wise bilinear resize with half-pixel-aligned sample centers.

    Output sample i maps to source coordinate (i + 0.5) * in/out - 0.5,
    clamped to the valid range. The blend is computed as v0 + f * (v1 - v0),
    which preserves constant inputs exactly and reduces to the identity when
    the sizes match. Accepts (h, w) or (h, w, C) arrays.
    """
    s = _as_f32(src)
    flat = s.ndim == 2
    if flat:
        s = s[:, :, None]
    if s.ndim != 3:
        raise DimensionError(f"bilinear_upsample expects (h, w[, C]) input, got shape {s.shape}")
    h, w, _ = s.shape
    if out_h <= 0 or out_w <= 0:
        raise DimensionError(f"target size {out_h}x{out_w} must be positive")
    if out_h < h or out_w < w:
        raise DimensionError(f"target {out_h}x{out_w} is smaller than source {h}x{w}")

    def centers(n_out: int, n_in: int):
        c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0.0, n_in - 1)
        lo = np.floor(c).astype(np.int64)
        frac = (c - lo).astype(_F32)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, frac

    y0, y1, fy = centers(out_h, h)
    x0, x1, fx = centers(out_w, w)
    v00 = s[y0[:, None], x0[None, :]]
    v01 = s[y0[:, None], x1[None, :]]
    v10 = s[y1[:, None], x0[None, :]]
    v11 = s[y1[:, None], x1[None, :]]
    fxc = fx[None, :, None]
    top = v00 + fxc * (v01 - v00)
    bot = v10 + fxc * (v11 - v10)
    out = top + fy[:, None, None] * (bot - top)
    return out[:, :, 0] if flat else out
