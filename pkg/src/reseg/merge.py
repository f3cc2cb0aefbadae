"""Margin-weighted checkpoint merging.

For each candidate model, prompt-variant embeddings per class yield an
intra-class similarity (mean cosine over unordered pairs within the
class), an inter-class similarity (mean cosine against every other
class's variants), and their difference, the separation margin. The
model score is the margin averaged over classes; normalized scores become
the weights of an elementwise parameter average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .errors import CheckpointError, MarginError, NonPositiveMarginError


def intra_class_similarity(embeddings: np.ndarray) -> float:
    """Mean cosine over all unordered pairs of one class's unit rows."""
    emb = np.asarray(embeddings, np.float64)
    k = emb.shape[0]
    if k < 2:
        raise MarginError(f"intra-class similarity needs >= 2 variants, got {k}")
    gram = emb @ emb.T
    return float((gram.sum() - np.trace(gram)) / (k * (k - 1)))


def inter_class_similarity(embeddings: np.ndarray, others: list[np.ndarray]) -> float:
    """Mean cosine between one class's rows and every other class's rows."""
    emb = np.asarray(embeddings, np.float64)
    if not others:
        raise MarginError("inter-class similarity needs >= 2 classes")
    k = emb.shape[0]
    total = 0.0
    for other in others:
        o = np.asarray(other, np.float64)
        if o.shape != emb.shape:
            raise MarginError(f"class embedding shapes differ: {o.shape} vs {emb.shape}")
        total += float((emb @ o.T).sum())
    return total / (k * k * len(others))


def class_margins(by_class: dict[str, np.ndarray]) -> dict[str, dict[str, float]]:
    """Per-class intra, inter, and margin values for one model."""
    names = list(by_class)
    if len(names) < 2:
        raise MarginError(f"margin statistics need >= 2 classes, got {len(names)}")
    out = {}
    for cls in names:
        others = [by_class[c] for c in names if c != cls]
        intra = intra_class_similarity(by_class[cls])
        inter = inter_class_similarity(by_class[cls], others)
        out[cls] = {"intra": intra, "inter": inter, "margin": intra - inter}
    return out


def separation_score(by_class: dict[str, np.ndarray]) -> float:
    """Model score: class-mean of (intra - inter)."""
    margins = class_margins(by_class)
    return float(np.mean([m["margin"] for m in margins.values()]))


def merge_weights(scores: list[float]) -> list[float]:
    """Normalize positive scores to weights summing to 1, order preserved.

    Equal scores short-circuit to exactly 1/O each (s / (O * s) would pick
    up rounding that the equal case must not have).
    """
    if not scores:
        raise MarginError("no scores to normalize")
    for i, s in enumerate(scores):
        if s <= 0.0:
            raise NonPositiveMarginError(
                f"score {i} is {s:.6g}; non-positive margins make weights meaningless"
            )
    if all(s == scores[0] for s in scores):
        return [1.0 / len(scores)] * len(scores)
    total = float(sum(scores))
    return [float(s) / total for s in scores]


@dataclass
class MarginReport:
    """Everything the weighting decision rests on, JSON-serializable."""

    models: list[str]
    per_class: dict[str, dict[str, dict[str, float]]]  # model -> class -> stats
    scores: dict[str, float]
    weights: dict[str, float] | None  # None when any score is non-positive
    non_positive: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "models": self.models,
            "per_class": self.per_class,
            "scores": self.scores,
            "weights": self.weights,
            "non_positive": self.non_positive,
        }


def build_report(embeddings_by_model: dict[str, dict[str, np.ndarray]]) -> MarginReport:
    models = list(embeddings_by_model)
    per_class = {m: class_margins(embeddings_by_model[m]) for m in models}
    scores = {
        m: float(np.mean([c["margin"] for c in per_class[m].values()])) for m in models
    }
    bad = [m for m in models if scores[m] <= 0.0]
    weights = None
    if not bad:
        normalized = merge_weights([scores[m] for m in models])
        weights = dict(zip(models, normalized))
    return MarginReport(models, per_class, scores, weights, bad)


def merge_checkpoints(ckpts: list[Checkpoint], weights: list[float]) -> Checkpoint:
    """Elementwise weighted sum of architecturally identical checkpoints.

    Accumulation runs in the given model order in float32, so results are
    reproducible and match a scalar loop exactly.
    """
    if not ckpts:
        raise CheckpointError("no checkpoints to merge")
    if len(weights) != len(ckpts):
        raise CheckpointError(f"{len(ckpts)} checkpoints but {len(weights)} weights")
    total = float(sum(weights))
    if abs(total - 1.0) > 1e-6:
        raise CheckpointError(f"weights sum to {total:.8f}, expected 1 within 1e-6")
    names = sorted(ckpts[0].tensors)
    for i, ck in enumerate(ckpts[1:], start=1):
        if sorted(ck.tensors) != names:
            diff = sorted(set(ck.tensors) ^ set(names))
            raise CheckpointError(
                f"checkpoint {i} ({ck.model_id}) tensor names differ, e.g. '{diff[0]}'"
            )
        for name in names:
            if ck.tensors[name].shape != ckpts[0].tensors[name].shape:
                raise CheckpointError(
                    f"tensor '{name}' shape {ck.tensors[name].shape} in {ck.model_id} "
                    f"!= {ckpts[0].tensors[name].shape} in {ckpts[0].model_id}"
                )
    w32 = [np.float32(w) for w in weights]
    fused = {}
    for name in names:
        acc = w32[0] * ckpts[0].tensors[name]
        for w, ck in zip(w32[1:], ckpts[1:]):
            acc = acc + w * ck.tensors[name]
        fused[name] = acc
    meta = dict(ckpts[0].meta)
    meta["model_id"] = "merged:" + "+".join(ck.model_id for ck in ckpts)
    meta["sources"] = [ck.model_id for ck in ckpts]
    meta["weights"] = [float(w) for w in weights]
    meta.pop("seed", None)
    return Checkpoint(fused, meta)
