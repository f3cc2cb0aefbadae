"""Segmentation metrics: pixel confusion matrix, per-class IoU, mean IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # u64 (C, C): rows = ground truth, cols = prediction
    ignore_label: int | None = None

    @classmethod
    def zeros(cls, num_classes: int, ignore_label: int | None = None) -> "ConfusionMatrix":
        if num_classes < 1:
            raise DataError(f"need >= 1 class, got {num_classes}")
        return cls(np.zeros((num_classes, num_classes), np.uint64), ignore_label)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, gt: np.ndarray, pred: np.ndarray) -> ConfusionMatrix:
    """Add one (ground truth, prediction) pair of label maps to the matrix.

    Pixels whose ground truth equals ignore_label are skipped; everything
    else must be a valid class index.
    """
    g = np.asarray(gt).ravel()
    p = np.asarray(pred).ravel()
    if g.shape != p.shape:
        raise DimensionError(f"gt has {g.size} pixels but prediction has {p.size}")
    if cm.ignore_label is not None:
        keep = g != cm.ignore_label
        g, p = g[keep], p[keep]
    c = cm.num_classes
    if g.size:
        if int(g.min()) < 0 or int(g.max()) >= c:
            raise DataError(f"ground-truth label outside [0, {c})")
        if int(p.min()) < 0 or int(p.max()) >= c:
            raise DataError(f"predicted label outside [0, {c})")
        flat = np.bincount(
            (g.astype(np.int64) * c + p.astype(np.int64)), minlength=c * c
        ).astype(np.uint64)
        cm.counts += flat.reshape(c, c)
    return cm


def iou(cm: ConfusionMatrix) -> tuple[list[float | None], float]:
    """Per-class IoU (None where the union is empty) and their mean.

    Classes absent from both ground truth and prediction are excluded from
    the mean rather than scored zero.
    """
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    per_class: list[float | None] = []
    defined = []
    for c in range(cm.num_classes):
        if union[c] == 0.0:
            per_class.append(None)
        else:
            v = float(tp[c] / union[c])
            per_class.append(v)
            defined.append(v)
    if not defined:
        raise DataError("no class has any ground-truth or predicted pixels")
    return per_class, float(np.mean(defined))
