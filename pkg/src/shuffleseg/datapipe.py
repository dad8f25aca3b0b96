"""Image and label I/O, input standardization, and mask colorization.

Pixels are standardized to [-1, 1] as (2 * v) / 255 - 1; the endpoints map to
exactly -1.0 and +1.0. Label maps use the 19 Cityscapes train classes with
ignore id 255, rendered black when colorized.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

__all__ = [
    "IGNORE_LABEL",
    "NUM_CLASSES",
    "CLASS_NAMES",
    "PALETTE",
    "standardize_value",
    "preprocess",
    "load_image",
    "save_image",
    "load_labels",
    "save_labels",
    "colorize",
    "labels_from_colors",
    "load_palette",
]

IGNORE_LABEL = 255
NUM_CLASSES = 19

CLASS_NAMES = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle",
    "bicycle",
)

PALETTE = np.array([
    [128, 64, 128], [244, 35, 232], [70, 70, 70], [102, 102, 156],
    [190, 153, 153], [153, 153, 153], [250, 170, 30], [220, 220, 0],
    [107, 142, 35], [152, 251, 152], [70, 130, 180], [220, 20, 60],
    [255, 0, 0], [0, 0, 142], [0, 0, 70], [0, 60, 100], [0, 80, 100],
    [0, 0, 230], [119, 11, 32],
], dtype=np.uint8)


def standardize_value(v: float) -> float:
    """Scalar [0, 255] -> [-1, 1] map; exact at both endpoints."""
    return (v * 2.0) / 255.0 - 1.0


def preprocess(image: np.ndarray) -> np.ndarray:
    """Standardize an (h, w, 3) image in [0, 255] to a (1, 3, h, w) tensor."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {arr.shape}")
    data = arr.astype(np.float64)
    out = (data * 2.0) / 255.0 - 1.0
    return np.ascontiguousarray(
        out.transpose(2, 0, 1)[None].astype(np.float32))


def load_image(path) -> np.ndarray:
    """Read an RGB image as an (h, w, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise IOError(f"cannot read image {path}: {exc}") from exc


def save_image(path, array: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as a PNG."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) image, got shape {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_labels(path) -> np.ndarray:
    """Read a single-channel label PNG as an (h, w) int array."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P", "I", "I;16"):
                img = img.convert("L")
            arr = np.asarray(img)
    except (OSError, SyntaxError) as exc:
        raise IOError(f"cannot read label map {path}: {exc}") from exc
    if arr.ndim != 2:
        raise IOError(f"label map {path} is not single-channel, shape {arr.shape}")
    return arr.astype(np.int64)


def save_labels(path, labels: np.ndarray) -> None:
    """Write an (h, w) label map as an 8-bit single-channel PNG."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"expected an (h, w) label map, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError(
            f"label values [{arr.min()}, {arr.max()}] do not fit 8-bit storage")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


def colorize(labels: np.ndarray, palette: Optional[np.ndarray] = None) -> np.ndarray:
    """Map class ids to RGB; the ignore id renders black."""
    palette = PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    labels = np.asarray(labels)
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[: len(palette)] = palette
    lut[IGNORE_LABEL] = (0, 0, 0)
    return lut[labels.astype(np.int64)]


def labels_from_colors(rgb: np.ndarray,
                       palette: Optional[np.ndarray] = None) -> np.ndarray:
    """Invert `colorize`: look colors up in the palette (black -> ignore)."""
    palette = PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    rgb = np.asarray(rgb, dtype=np.uint8)
    table: Dict[Tuple[int, int, int], int] = {
        tuple(color): idx for idx, color in enumerate(palette.tolist())
    }
    table[(0, 0, 0)] = IGNORE_LABEL
    out = np.full(rgb.shape[:2], -1, dtype=np.int64)
    for (r, g, b), idx in table.items():
        mask = (rgb[:, :, 0] == r) & (rgb[:, :, 1] == g) & (rgb[:, :, 2] == b)
        out[mask] = idx
    if (out < 0).any():
        raise ValueError("image contains colors outside the palette")
    return out


def load_palette(path) -> Tuple[np.ndarray, List[str]]:
    """Parse a palette override file: one `id r g b name` line per class."""
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 4)
            if len(parts) < 4:
                raise ValueError(f"{path}:{lineno}: expected 'id r g b name'")
            idx = int(parts[0])
            entries[idx] = ((int(parts[1]), int(parts[2]), int(parts[3])),
                            parts[4] if len(parts) > 4 else str(idx))
    if not entries:
        raise ValueError(f"{path}: no palette entries")
    count = max(entries) + 1
    palette = np.zeros((count, 3), dtype=np.uint8)
    names = [""] * count
    for idx, (rgb, name) in entries.items():
        palette[idx] = rgb
        names[idx] = name
    return palette, names
