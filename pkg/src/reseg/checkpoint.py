"""Checkpoints: named float32 parameter collections plus model metadata.

Canonical parameter names for a vision encoder with L layers, width D,
patch size P, H heads and hidden factor R (matrices are stored
input-dim x output-dim, applied as ``x @ W + b``):

    patch_proj.weight          (3*P*P, D)
    patch_proj.bias            (D,)
    cls_token                  (D,)
    pos_embed                  (T, D)        T = token count incl. index 0
    blocks.{i}.ln1.gamma/.beta (D,)          i in 0..L-1
    blocks.{i}.attn.q.weight   (D, D)   + .bias (D,)   likewise k, v, out
    blocks.{i}.ln2.gamma/.beta (D,)
    blocks.{i}.mlp.fc1.weight  (D, R*D) + .bias (R*D,)
    blocks.{i}.mlp.fc2.weight  (R*D, D) + .bias (D,)
    ln_final.gamma/.beta       (D,)
    proj                       (D, E)        optional output projection

Metadata keys: model_id, dim, layers, patch, heads, mlp_ratio, preprocess
{mean, std}, plus optional seed (synthetic models) and merge provenance
(sources, weights, scores).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import CheckpointError

META_ARCH_KEYS = ("dim", "layers", "patch", "heads", "mlp_ratio")


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def arch(self) -> dict:
        missing = [k for k in META_ARCH_KEYS if k not in self.meta]
        if missing:
            raise CheckpointError(f"checkpoint metadata lacks {missing}")
        return {k: self.meta[k] for k in META_ARCH_KEYS}

    @property
    def model_id(self) -> str:
        return str(self.meta.get("model_id", "unknown"))

    def preprocess_constants(self) -> tuple[np.ndarray, np.ndarray]:
        pp = self.meta.get("preprocess", {})
        mean = np.asarray(pp.get("mean", [0.0, 0.0, 0.0]), np.float32)
        std = np.asarray(pp.get("std", [1.0, 1.0, 1.0]), np.float32)
        return mean, std


def parameter_shapes(
    dim: int, layers: int, patch: int, mlp_ratio: float, tokens: int, proj_dim: int | None = None
) -> dict[str, tuple[int, ...]]:
    """Exact canonical tensor-name -> shape table for one architecture."""
    hidden = int(round(dim * mlp_ratio))
    shapes: dict[str, tuple[int, ...]] = {
        "patch_proj.weight": (3 * patch * patch, dim),
        "patch_proj.bias": (dim,),
        "cls_token": (dim,),
        "pos_embed": (tokens, dim),
        "ln_final.gamma": (dim,),
        "ln_final.beta": (dim,),
    }
    for i in range(layers):
        p = f"blocks.{i}."
        shapes[p + "ln1.gamma"] = (dim,)
        shapes[p + "ln1.beta"] = (dim,)
        for name in ("q", "k", "v", "out"):
            shapes[p + f"attn.{name}.weight"] = (dim, dim)
            shapes[p + f"attn.{name}.bias"] = (dim,)
        shapes[p + "ln2.gamma"] = (dim,)
        shapes[p + "ln2.beta"] = (dim,)
        shapes[p + "mlp.fc1.weight"] = (dim, hidden)
        shapes[p + "mlp.fc1.bias"] = (hidden,)
        shapes[p + "mlp.fc2.weight"] = (hidden, dim)
        shapes[p + "mlp.fc2.bias"] = (dim,)
    if proj_dim is not None:
        shapes["proj"] = (dim, proj_dim)
    return shapes


def validate_parameters(ckpt: Checkpoint) -> None:
    """Check the tensor set is exactly the one the metadata implies."""
    arch = ckpt.arch()
    if "pos_embed" not in ckpt.tensors:
        raise CheckpointError(f"{ckpt.model_id}: missing tensor 'pos_embed'")
    tokens = ckpt.tensors["pos_embed"].shape[0]
    proj_dim = ckpt.tensors["proj"].shape[1] if "proj" in ckpt.tensors else None
    expected = parameter_shapes(
        arch["dim"], arch["layers"], arch["patch"], arch["mlp_ratio"], tokens, proj_dim
    )
    missing = sorted(set(expected) - set(ckpt.tensors))
    extra = sorted(set(ckpt.tensors) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"{ckpt.model_id}: parameter set mismatch (missing {missing[:4]}, extra {extra[:4]})"
        )
    for name, shape in expected.items():
        got = ckpt.tensors[name].shape
        if tuple(got) != shape:
            raise CheckpointError(f"{ckpt.model_id}: tensor '{name}' has shape {got}, expected {shape}")


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    formats.write_container(path, ckpt.tensors, ckpt.meta)


def load_checkpoint(path) -> Checkpoint:
    tensors, meta = formats.read_container(path)
    return Checkpoint(tensors, meta)
