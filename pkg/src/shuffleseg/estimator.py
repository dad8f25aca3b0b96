"""Estimator-style facade over the inference engine.

`Segmenter` follows the scikit-learn estimator protocol (get_params /
set_params / fit / predict) without depending on scikit-learn itself, so the
network drops into pipelines and grid searches. `fit` materializes the graph
and weights; no training happens (the engine is inference-only).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .datapipe import preprocess
from .metrics import ConfusionMatrix
from .network import NetworkSpec, build_network
from .runtime import forward
from .weights import WeightManifest, init_random, validate

__all__ = ["Segmenter", "check_image", "check_image_batch"]


def check_image(X) -> np.ndarray:
    """Validate a single (h, w, 3) image with values in [0, 255]."""
    arr = np.asarray(X)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("image is empty")
    low, high = float(arr.min()), float(arr.max())
    if low < 0 or high > 255:
        raise ValueError(f"pixel values [{low}, {high}] outside [0, 255]")
    return arr


def check_image_batch(X) -> np.ndarray:
    """Coerce input to an (n, h, w, 3) batch; accepts a single image too."""
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(
            f"expected (n, h, w, 3) or (h, w, 3) image data, got shape {arr.shape}")
    for i in range(arr.shape[0]):
        check_image(arr[i])
    return arr


class Segmenter:
    """Semantic-segmentation predictor with a scikit-learn-style interface.

    Parameters mirror the network configuration; `weights` is an optional
    manifest path prefix (random fan-in-scaled weights seeded by `seed` are
    used otherwise). After `fit`, the built graph and manifest are available
    as `graph_` and `manifest_`.
    """

    _param_names = ("output_stride", "head", "num_classes", "depth_multiplier",
                    "dropout_keep_prob", "weights", "seed")

    def __init__(self, output_stride: int = 16, head: str = "basic",
                 num_classes: int = 19, depth_multiplier: float = 1.0,
                 dropout_keep_prob: float = 0.9, weights: Optional[str] = None,
                 seed: int = 0):
        self.output_stride = output_stride
        self.head = head
        self.num_classes = num_classes
        self.depth_multiplier = depth_multiplier
        self.dropout_keep_prob = dropout_keep_prob
        self.weights = weights
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params) -> "Segmenter":
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(
                    f"invalid parameter {name!r} for Segmenter; valid parameters "
                    f"are {self._param_names}")
            setattr(self, name, value)
        return self

    def fit(self, X=None, y=None) -> "Segmenter":
        """Build the graph and load (or initialize) weights; returns self."""
        self.spec_ = NetworkSpec(
            output_stride=self.output_stride,
            head=self.head,
            num_classes=self.num_classes,
            depth_multiplier=self.depth_multiplier,
            dropout_keep_prob=self.dropout_keep_prob,
        )
        self.graph_ = build_network(self.spec_)
        if self.weights is not None:
            self.manifest_ = WeightManifest.load(self.weights)
        else:
            self.manifest_ = init_random(self.graph_, seed=self.seed)
        report = validate(self.manifest_, self.graph_)
        if not report.ok:
            raise ValueError(f"weights do not match the configured network:\n{report}")
        return self

    def _require_fitted(self):
        if not hasattr(self, "graph_"):
            raise RuntimeError("this Segmenter is not fitted yet; call fit() first")

    def predict(self, X) -> np.ndarray:
        """Per-pixel class labels for (h, w, 3) or (n, h, w, 3) input."""
        self._require_fitted()
        single = np.asarray(X).ndim == 3
        batch = check_image_batch(X)
        outputs = []
        for i in range(batch.shape[0]):
            _, labels = forward(self.graph_, self.manifest_, preprocess(batch[i]))
            outputs.append(labels[0])
        result = np.stack(outputs)
        return result[0] if single else result

    def predict_logits(self, X) -> np.ndarray:
        """Upsampled per-class scores, shape (n, num_classes, h, w)."""
        self._require_fitted()
        batch = check_image_batch(X)
        outputs = []
        for i in range(batch.shape[0]):
            logits, _ = forward(self.graph_, self.manifest_, preprocess(batch[i]))
            outputs.append(logits[0])
        return np.stack(outputs)

    def score(self, X, y) -> float:
        """Mean IOU of predictions against ground-truth label maps."""
        self._require_fitted()
        batch = check_image_batch(X)
        gt = np.asarray(y)
        if gt.ndim == 2:
            gt = gt[None]
        if gt.shape[0] != batch.shape[0]:
            raise ValueError(
                f"{batch.shape[0]} images but {gt.shape[0]} label maps")
        cm = ConfusionMatrix(self.num_classes)
        preds = self.predict(batch)
        for i in range(batch.shape[0]):
            cm.update(preds[i], gt[i])
        return cm.mean_iou()
