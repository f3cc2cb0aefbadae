"""Convert framework checkpoints to the engine's container format.

A manifest maps source tensor names onto the engine's canonical names and
carries the architecture metadata. Matrices listed under "transpose" are
transposed on the way out (frameworks that store linear weights as
out-features x in-features need this; the engine applies ``x @ W + b``).
All values are downcast to float32 with round-to-nearest-even.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container


class ManifestError(ValueError):
    pass


@dataclass
class ExportManifest:
    model_id: str
    mapping: dict[str, str]  # source name -> canonical name
    meta: dict  # dim, layers, patch, heads, mlp_ratio, preprocess...
    transpose: list[str]

    @classmethod
    def load(cls, path) -> "ExportManifest":
        raw = json.loads(Path(path).read_text())
        try:
            return cls(
                model_id=str(raw["model_id"]),
                mapping=dict(raw["mapping"]),
                meta=dict(raw["meta"]),
                transpose=list(raw.get("transpose", [])),
            )
        except KeyError as exc:
            raise ManifestError(f"manifest {path} lacks key {exc}") from exc


def canonical_names(dim: int, layers: int, patch: int, mlp_ratio: float, with_proj: bool) -> set[str]:
    """The exact tensor-name set the engine expects for one architecture."""
    names = {
        "patch_proj.weight",
        "patch_proj.bias",
        "cls_token",
        "pos_embed",
        "ln_final.gamma",
        "ln_final.beta",
    }
    for i in range(layers):
        base = f"blocks.{i}."
        names |= {base + "ln1.gamma", base + "ln1.beta", base + "ln2.gamma", base + "ln2.beta"}
        for part in ("q", "k", "v", "out"):
            names |= {base + f"attn.{part}.weight", base + f"attn.{part}.bias"}
        names |= {
            base + "mlp.fc1.weight",
            base + "mlp.fc1.bias",
            base + "mlp.fc2.weight",
            base + "mlp.fc2.bias",
        }
    if with_proj:
        names.add("proj")
    return names


def load_source(path) -> dict[str, np.ndarray]:
    """Tensor dict from .safetensors, .npz, or a torch-native .pt file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".safetensors":
        from safetensors.numpy import load_file

        return dict(load_file(str(path)))
    if suffix == ".npz":
        with np.load(path) as data:
            return {k: np.asarray(data[k]) for k in data.files}
    if suffix in (".pt", ".pth", ".bin"):
        import torch

        state = torch.load(path, map_location="cpu", weights_only=True)
        return {k: v.detach().to(torch.float32).numpy() for k, v in state.items()}
    raise ManifestError(f"unsupported source format: {path.name}")


def export_checkpoint(source: dict[str, np.ndarray], manifest: ExportManifest, out_path) -> None:
    """Map, downcast, validate, and serialize one model."""
    missing_src = sorted(set(manifest.mapping) - set(source))
    if missing_src:
        raise ManifestError(f"source lacks mapped tensors: {missing_src}")
    tensors: dict[str, np.ndarray] = {}
    for src_name, canon in manifest.mapping.items():
        arr = np.asarray(source[src_name], dtype=np.float32)
        if src_name in manifest.transpose:
            arr = np.ascontiguousarray(arr.T)
        if canon in tensors:
            raise ManifestError(f"manifest maps two tensors onto '{canon}'")
        tensors[canon] = arr
    expected = canonical_names(
        int(manifest.meta["dim"]),
        int(manifest.meta["layers"]),
        int(manifest.meta["patch"]),
        float(manifest.meta["mlp_ratio"]),
        with_proj="proj" in tensors,
    )
    gaps = sorted(expected - set(tensors))
    extras = sorted(set(tensors) - expected)
    if gaps:
        raise ManifestError(f"manifest leaves canonical gaps: {gaps}")
    if extras:
        raise ManifestError(f"manifest produces unknown tensors: {extras}")
    meta = dict(manifest.meta)
    meta["model_id"] = manifest.model_id
    container.write(out_path, tensors, meta)
