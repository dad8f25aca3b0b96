"""Confusion-matrix accumulation and intersection-over-union metrics.

Rows index ground truth, columns index predictions. Pixels whose ground
truth carries the ignore id are counted separately and never enter the
matrix. Matrices merge by element-wise addition, so per-worker partial
matrices can be combined in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Union

import numpy as np

__all__ = ["ConfusionMatrix", "IouSummary"]


@dataclass
class IouSummary:
    class_iou: np.ndarray  # per-class IOU, NaN where the class has no support
    mean_iou: float        # NaN when no class has support
    defined: bool          # False when every class was absent
    ignored_pixels: int


class ConfusionMatrix:
    """K x K pixel-count matrix with ignore-label handling."""

    def __init__(self, num_classes: int, ignore_label: int = 255):
        if num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {num_classes}")
        self.num_classes = int(num_classes)
        self.ignore_label = int(ignore_label)
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.ignored_pixels = 0

    def update(self, pred: np.ndarray, gt: np.ndarray) -> "ConfusionMatrix":
        """Accumulate one prediction/ground-truth pair of equal shape."""
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
        keep = gt != self.ignore_label
        self.ignored_pixels += int(gt.size - keep.sum())
        p = pred[keep].astype(np.int64)
        g = gt[keep].astype(np.int64)
        if p.size == 0:
            return self
        if p.min() < 0 or p.max() >= self.num_classes:
            raise ValueError(
                f"prediction values [{p.min()}, {p.max()}] outside "
                f"[0, {self.num_classes})")
        if g.min() < 0 or g.max() >= self.num_classes:
            raise ValueError(
                f"ground-truth values [{g.min()}, {g.max()}] outside "
                f"[0, {self.num_classes}) and not ignore ({self.ignore_label})")
        flat = np.bincount(g * self.num_classes + p,
                           minlength=self.num_classes ** 2)
        self.counts += flat.reshape(self.num_classes, self.num_classes)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Element-wise sum with another matrix over the same classes."""
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices with different class counts")
        out = ConfusionMatrix(self.num_classes, self.ignore_label)
        out.counts = self.counts + other.counts
        out.ignored_pixels = self.ignored_pixels + other.ignored_pixels
        return out

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return self.merge(other)

    @property
    def total_pixels(self) -> int:
        return int(self.counts.sum()) + self.ignored_pixels

    def class_iou(self) -> np.ndarray:
        """Per-class TP / (TP + FP + FN); NaN for classes with zero union."""
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        union = tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            iou = np.where(union > 0, tp / np.maximum(union, 1), np.nan)
        return iou

    def mean_iou(self) -> float:
        """Mean over classes with support; NaN when every class is absent."""
        iou = self.class_iou()
        valid = ~np.isnan(iou)
        if not valid.any():
            return float("nan")
        return float(iou[valid].mean())

    def summary(self) -> IouSummary:
        iou = self.class_iou()
        valid = ~np.isnan(iou)
        return IouSummary(
            class_iou=iou,
            mean_iou=float(iou[valid].mean()) if valid.any() else float("nan"),
            defined=bool(valid.any()),
            ignored_pixels=self.ignored_pixels,
        )

    def category_matrix(self, grouping: Union[Dict[int, int], Sequence[int]]
                        ) -> "ConfusionMatrix":
        """Collapse classes into categories via a total class -> category map."""
        if isinstance(grouping, dict):
            mapping = [grouping.get(i) for i in range(self.num_classes)]
        else:
            mapping = list(grouping)
            if len(mapping) < self.num_classes:
                mapping += [None] * (self.num_classes - len(mapping))
        missing = [i for i, m in enumerate(mapping[: self.num_classes]) if m is None]
        if missing:
            raise ValueError(f"grouping does not cover classes {missing}")
        cats = np.asarray(mapping[: self.num_classes], dtype=np.int64)
        if cats.min() < 0:
            raise ValueError("category ids must be non-negative")
        num_cats = int(cats.max()) + 1
        out = ConfusionMatrix(num_cats, self.ignore_label)
        np.add.at(out.counts, (cats[:, None], cats[None, :]), self.counts)
        out.ignored_pixels = self.ignored_pixels
        return out

    def category_iou(self, grouping) -> np.ndarray:
        """IOU per category, equivalent to relabeling pixels before counting."""
        return self.category_matrix(grouping).class_iou()
