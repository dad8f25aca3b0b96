"""Training-protocol utilities: poly learning-rate schedule and augmentations.

Only the desk-verifiable pieces live here; the optimizer, losses, and actual
training loops are out of scope. Augmentations operate jointly on an
(h, w, 3) image and an (h, w) label map so the pair stays pixel-aligned, and
draw all randomness from a caller-supplied numpy Generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .datapipe import IGNORE_LABEL
from .kernels import bilinear_resize

__all__ = [
    "ScheduleConfig",
    "poly_lr",
    "SCALE_CHOICES",
    "CROP_PAD_VALUE",
    "random_scale",
    "random_crop",
    "random_flip",
    "resize_image",
    "resize_labels",
    "dropout_train",
]

# Uniform scale choices: 0.5 through 2.0 in steps of 0.25.
SCALE_CHOICES = tuple(0.5 + 0.25 * i for i in range(7))

# Images pad with the standardization midpoint (the pixel value mapping to 0);
# label maps pad with the ignore id.
CROP_PAD_VALUE = 127.5


@dataclass(frozen=True)
class ScheduleConfig:
    """Poly learning-rate schedule with an optional flat slow start."""

    lr_initial: float = 1e-3
    max_iter: int = 60000
    power: float = 0.9
    slow_start_steps: int = 0
    slow_start_lr: float = 1e-5

    def __post_init__(self):
        if self.lr_initial <= 0:
            raise ValueError(f"lr_initial must be positive, got {self.lr_initial}")
        if self.max_iter <= 0:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if self.power <= 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if self.slow_start_steps < 0:
            raise ValueError("slow_start_steps must be non-negative")


def poly_lr(step: int, cfg: ScheduleConfig) -> float:
    """Learning rate at `step`: lr_initial * (1 - step/max_iter)^power.

    Steps below `slow_start_steps` return the flat slow-start rate; steps
    beyond `max_iter` clamp to zero with a warning.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step < cfg.slow_start_steps:
        return cfg.slow_start_lr
    if step > cfg.max_iter:
        warnings.warn(f"step {step} beyond max_iter {cfg.max_iter}; rate clamped to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return cfg.lr_initial * (1.0 - step / cfg.max_iter) ** cfg.power


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (h, w, 3) image."""
    image = np.asarray(image, dtype=np.float32)
    nchw = np.ascontiguousarray(image.transpose(2, 0, 1)[None])
    out = bilinear_resize(nchw, out_h, out_w, align_corners=False)
    return np.ascontiguousarray(out[0].transpose(1, 2, 0))


def resize_labels(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of an (h, w) label map."""
    labels = np.asarray(labels)
    h, w = labels.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.int64), w - 1)
    return labels[ys[:, None], xs[None, :]]


def _check_pair(image: np.ndarray, labels: np.ndarray):
    image = np.asarray(image, dtype=np.float32)
    labels = np.asarray(labels)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got {image.shape}")
    if labels.shape != image.shape[:2]:
        raise ValueError(
            f"label map {labels.shape} does not match image {image.shape[:2]}")
    return image, labels


def random_scale(image: np.ndarray, labels: np.ndarray,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Scale both inputs by a factor drawn uniformly from SCALE_CHOICES."""
    image, labels = _check_pair(image, labels)
    scale = SCALE_CHOICES[rng.integers(0, len(SCALE_CHOICES))]
    if scale == 1.0:
        return image, labels
    h, w = labels.shape
    out_h = max(int(round(h * scale)), 1)
    out_w = max(int(round(w * scale)), 1)
    return resize_image(image, out_h, out_w), resize_labels(labels, out_h, out_w)


def random_crop(image: np.ndarray, labels: np.ndarray, rng: np.random.Generator,
                size: int = 769) -> Tuple[np.ndarray, np.ndarray]:
    """Crop a size x size window at a uniform offset, padding smaller inputs.

    Images pad with CROP_PAD_VALUE and labels with the ignore id before
    cropping, so the output is always exactly size x size.
    """
    image, labels = _check_pair(image, labels)
    h, w = labels.shape
    if h < size or w < size:
        ph, pw = max(size - h, 0), max(size - w, 0)
        image = np.pad(image, ((0, ph), (0, pw), (0, 0)),
                       constant_values=CROP_PAD_VALUE)
        labels = np.pad(labels, ((0, ph), (0, pw)),
                        constant_values=IGNORE_LABEL)
        h, w = labels.shape
    oy = int(rng.integers(0, h - size + 1))
    ox = int(rng.integers(0, w - size + 1))
    return (np.ascontiguousarray(image[oy : oy + size, ox : ox + size]),
            np.ascontiguousarray(labels[oy : oy + size, ox : ox + size]))


def random_flip(image: np.ndarray, labels: np.ndarray, rng: np.random.Generator,
                force: Optional[bool] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Flip both inputs left-right with probability 0.5 (or as forced)."""
    image, labels = _check_pair(image, labels)
    flip = bool(rng.random() < 0.5) if force is None else bool(force)
    if not flip:
        return image, labels
    return (np.ascontiguousarray(image[:, ::-1]),
            np.ascontiguousarray(labels[:, ::-1]))


def dropout_train(x: np.ndarray, keep_prob: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Training-mode dropout: random keep mask scaled by 1/keep_prob."""
    if not 0 < keep_prob <= 1:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return np.asarray(x, dtype=np.float32)
    mask = rng.random(size=np.shape(x)) < keep_prob
    return (np.asarray(x, dtype=np.float32) * mask / np.float32(keep_prob)
            ).astype(np.float32)
