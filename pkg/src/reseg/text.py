"""Prompt grammars, deterministic variant generation, and text encoders.

Variant strings are built as ``prefix + " of " + synonym + " " + suffix``.
Draws come from a SplitMix64 stream seeded with ``grammar.seed + class
index`` (wrapping 64-bit add, classes in grammar order); each variant
draws its prefix index, then synonym index, then suffix index, all via
the stream's multiply-shift bounded draw. Independent implementations
that follow this recipe reproduce the exact strings.

Text encoding is pluggable: anything with a ``dim`` and an
``encode(list[str]) -> (n, dim) float32`` method works. Two encoders
ship: a character-trigram feature-hashing encoder (self-contained, used
by the test suite and the CLI's --toy-encoder path) and a reader for
precomputed embedding containers produced offline from a real text tower.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import formats
from .errors import DataError, GrammarError, ZeroVectorError
from .rng import SplitMix64, mix64

_MASK64 = (1 << 64) - 1


@dataclass
class PromptGrammar:
    """Base prompts plus the lexical variation lists used to build variants."""

    base_prompts: dict[str, str]  # class name -> base prompt, order defines class index
    synonyms: dict[str, list[str]]
    prefixes: list[str]
    suffixes: list[str]
    k: int
    seed: int = 0

    def __post_init__(self):
        if not self.base_prompts:
            raise GrammarError("grammar defines no classes")
        if self.k < 1:
            raise GrammarError(f"variant count must be >= 1, got {self.k}")
        if not self.prefixes or not self.suffixes:
            raise GrammarError("grammar needs at least one prefix and one suffix")
        for cls in self.base_prompts:
            if not self.synonyms.get(cls):
                raise GrammarError(f"class '{cls}' has no synonyms")

    @property
    def classes(self) -> list[str]:
        return list(self.base_prompts)

    @classmethod
    def load(cls, path) -> "PromptGrammar":
        raw = json.loads(Path(path).read_text())
        try:
            return cls(
                base_prompts=dict(raw["base_prompts"]),
                synonyms={k: list(v) for k, v in raw["synonyms"].items()},
                prefixes=list(raw["prefixes"]),
                suffixes=list(raw["suffixes"]),
                k=int(raw["K"]),
                seed=int(raw.get("seed", 0)),
            )
        except KeyError as exc:
            raise GrammarError(f"grammar file {path} lacks key {exc}") from exc


def generate_variants(grammar: PromptGrammar, class_name: str) -> list[str]:
    """K deterministic prompt variants for one class."""
    if class_name not in grammar.base_prompts:
        raise GrammarError(f"unknown class '{class_name}'")
    syns = grammar.synonyms[class_name]
    index = grammar.classes.index(class_name)
    stream = SplitMix64((grammar.seed + index) & _MASK64)
    out = []
    for _ in range(grammar.k):
        prefix = grammar.prefixes[stream.next_index(len(grammar.prefixes))]
        syn = syns[stream.next_index(len(syns))]
        suffix = grammar.suffixes[stream.next_index(len(grammar.suffixes))]
        out.append(f"{prefix} of {syn} {suffix}")
    return out


class TextEncoder(Protocol):
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingTextEncoder:
    """Feature-hashes character trigrams into a fixed-width float vector.

    Deterministic in (dim, seed); strings shorter than three characters
    hash as a single gram. Raw (unnormalized) counts come out; callers
    normalize.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise GrammarError(f"encoder dim must be >= 1, got {dim}")
        self.dim = dim
        self._seed_mix = mix64(seed)

    def _grams(self, text: str) -> list[bytes]:
        data = text.encode("utf-8")
        if len(data) < 3:
            return [data]
        return [data[i : i + 3] for i in range(len(data) - 2)]

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for gram in self._grams(text):
                h = 0xCBF29CE484222325  # FNV-1a 64
                for byte in gram:
                    h = ((h ^ byte) * 0x100000001B3) & _MASK64
                h = mix64(h ^ self._seed_mix)
                sign = 1.0 if (h >> 63) == 0 else -1.0
                out[row, h % self.dim] += sign
        return out


def normalize_rows(vectors: np.ndarray, what: str = "embedding") -> np.ndarray:
    """L2-normalize each row; zero rows are an error."""
    v = np.asarray(vectors, np.float32)
    norms = np.sqrt(np.sum(v.astype(np.float64) ** 2, axis=-1))
    if np.any(norms == 0.0):
        bad = int(np.argwhere(norms == 0.0)[0][0])
        raise ZeroVectorError(f"{what} row {bad} is a zero vector and cannot be normalized")
    return (v / norms[..., None].astype(np.float32)).astype(np.float32)


def encode_prompts(variants: Sequence[str], encoder: TextEncoder) -> np.ndarray:
    """Unit-norm (K, D) embeddings, one row per variant, order preserved."""
    return normalize_rows(encoder.encode(list(variants)), what="encoded prompt")


def class_embedding_matrix(grammar: PromptGrammar, encoder: TextEncoder) -> np.ndarray:
    """(C, D) unit-norm embeddings of the base prompts, grammar class order."""
    return encode_prompts([grammar.base_prompts[c] for c in grammar.classes], encoder)


EMBEDDING_PREFIX = "text/"


def embedding_tensor_name(model: str, class_name: str) -> str:
    return f"{EMBEDDING_PREFIX}{model}/{class_name}"


def write_embedding_sets(path, sets: dict[str, dict[str, np.ndarray]], meta: dict | None = None) -> None:
    """Persist per-(model, class) variant embeddings in a tensor container."""
    tensors = {}
    for model, by_class in sets.items():
        for cls, emb in by_class.items():
            tensors[embedding_tensor_name(model, cls)] = np.asarray(emb, np.float32)
    formats.write_container(path, tensors, meta or {})


def load_embedding_sets(path) -> dict[str, dict[str, np.ndarray]]:
    """Read ``text/<model>/<class>`` tensors back into model -> class -> (K, D)."""
    tensors, _ = formats.read_container(path)
    sets: dict[str, dict[str, np.ndarray]] = {}
    for name, arr in tensors.items():
        if not name.startswith(EMBEDDING_PREFIX):
            continue
        parts = name.split("/", 2)
        if len(parts) != 3:
            raise DataError(f"embedding tensor '{name}' is not named text/<model>/<class>")
        sets.setdefault(parts[1], {})[parts[2]] = arr
    if not sets:
        raise DataError(f"{path} holds no text/<model>/<class> tensors")
    return sets


def class_matrix_from_sets(by_class: dict[str, np.ndarray], classes: Sequence[str] | None = None) -> np.ndarray:
    """(C, D) matrix for scoring: mean of each class's variant rows, renormalized."""
    names = list(classes) if classes is not None else sorted(by_class)
    rows = []
    for cls in names:
        if cls not in by_class:
            raise DataError(f"embedding file lacks class '{cls}'")
        rows.append(np.asarray(by_class[cls], np.float32).mean(axis=0))
    return normalize_rows(np.stack(rows), what="class embedding")
