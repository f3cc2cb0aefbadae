"""Dump text-tower embeddings for prompt variants into the engine format.

The variant recipe matches the engine's documented scheme exactly: a
SplitMix64 stream seeded with ``grammar seed + class index`` (wrapping
64-bit add, classes in key order) draws, per variant, a prefix index,
then a synonym index, then a suffix index via ``(next_u64() * n) >> 64``;
the string is ``prefix + " of " + synonym + " " + suffix``.

Towers are adapters with a ``dim`` and ``encode(list[str]) -> (n, dim)``
array; rows are L2-normalized here and written as float32
``text/<model>/<class>`` tensors of shape K x D.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import container

_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class _Stream:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_index(self, n: int) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        return (_mix64(self.state) * n) >> 64


def load_grammar(path) -> dict:
    raw = json.loads(Path(path).read_text())
    for key in ("base_prompts", "synonyms", "prefixes", "suffixes", "K"):
        if key not in raw:
            raise ValueError(f"grammar {path} lacks key '{key}'")
    return raw


def variants_for_class(grammar: dict, class_name: str) -> list[str]:
    classes = list(grammar["base_prompts"])
    stream = _Stream((int(grammar.get("seed", 0)) + classes.index(class_name)) & _MASK64)
    prefixes = grammar["prefixes"]
    synonyms = grammar["synonyms"][class_name]
    suffixes = grammar["suffixes"]
    out = []
    for _ in range(int(grammar["K"])):
        prefix = prefixes[stream.next_index(len(prefixes))]
        syn = synonyms[stream.next_index(len(synonyms))]
        suffix = suffixes[stream.next_index(len(suffixes))]
        out.append(f"{prefix} of {syn} {suffix}")
    return out


class HashTower:
    """Deterministic trigram-hash tower for weight-free integration runs."""

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self._seed_mix = _mix64(seed)

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), np.float32)
        for row, text in enumerate(texts):
            data = text.encode("utf-8")
            grams = [data] if len(data) < 3 else [data[i : i + 3] for i in range(len(data) - 2)]
            for gram in grams:
                h = 0xCBF29CE484222325
                for byte in gram:
                    h = ((h ^ byte) * 0x100000001B3) & _MASK64
                h = _mix64(h ^ self._seed_mix)
                out[row, h % self.dim] += 1.0 if (h >> 63) == 0 else -1.0
        return out


class HfClipTower:
    """Text tower of a Hugging Face CLIP model (imported lazily)."""

    def __init__(self, model_id: str):
        import torch
        from transformers import CLIPModel, CLIPTokenizer

        self._torch = torch
        self._tok = CLIPTokenizer.from_pretrained(model_id)
        self._model = CLIPModel.from_pretrained(model_id).eval()
        self.dim = int(self._model.config.projection_dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        with self._torch.no_grad():
            batch = self._tok(texts, padding=True, return_tensors="pt")
            feats = self._model.get_text_features(**batch)
        return feats.to(self._torch.float32).numpy()


def make_tower(spec: str):
    """Tower from a spec string: 'hash:<dim>[:<seed>]' or 'hf:<model id>'."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        dim, _, seed = rest.partition(":")
        return HashTower(int(dim), int(seed or 0))
    if kind == "hf":
        return HfClipTower(rest)
    raise ValueError(f"unknown tower spec '{spec}' (use hash:<dim>[:<seed>] or hf:<id>)")


def export_text_embeddings(tower, grammar: dict, model_id: str, out_path) -> dict[str, np.ndarray]:
    """Encode every class's variants, normalize, and write the container."""
    tensors: dict[str, np.ndarray] = {}
    for class_name in grammar["base_prompts"]:
        variants = variants_for_class(grammar, class_name)
        raw = np.asarray(tower.encode(variants), dtype=np.float32)
        norms = np.linalg.norm(raw.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            raise ValueError(f"tower returned a zero vector for class '{class_name}'")
        tensors[f"text/{model_id}/{class_name}"] = (
            raw / norms[:, None].astype(np.float32)
        ).astype(np.float32)
    meta = {"model_id": model_id, "K": int(grammar["K"]), "classes": list(grammar["base_prompts"])}
    container.write(out_path, tensors, meta)
    return tensors
