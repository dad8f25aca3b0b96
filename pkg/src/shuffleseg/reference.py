"""Naive reference implementations of every numeric kernel.

These are deliberately written as direct nested loops with no tiling or
vectorization; they define the ground truth that the fast kernels are tested
against. Keep inputs small: they run at Python speed.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .kernels import (
    BatchNormParams,
    ConvParams,
    check_tensor,
    conv_output_size,
    same_padding,
)

__all__ = [
    "naive_conv_oracle",
    "naive_batch_norm",
    "naive_maxpool",
    "naive_global_avg_pool",
    "naive_bilinear_resize",
    "naive_argmax",
]


def naive_conv_oracle(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Triple-loop convolution identical in definition to conv2d."""
    x = check_tensor(x, "input")
    n, c_in, h, w = x.shape
    c_out, c_per_group, kh, kw = p.kernel.shape
    if c_per_group * p.groups != c_in:
        raise ValueError(
            f"input channels {c_in} incompatible with kernel channels "
            f"{c_per_group} x groups {p.groups}"
        )
    sh, sw = p.stride
    rh, rw = p.rate
    out_h = conv_output_size(h, sh)
    out_w = conv_output_size(w, sw)
    pad_top, _ = same_padding(h, kh, sh, rh)
    pad_left, _ = same_padding(w, kw, sw, rw)

    cog = c_out // p.groups
    kernel = p.kernel
    out = np.zeros((n, c_out, out_h, out_w), dtype=np.float32)
    for b in range(n):
        for co in range(c_out):
            g = co // cog
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for ky in range(kh):
                        iy = oy * sh - pad_top + ky * rh
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * sw - pad_left + kx * rw
                            if ix < 0 or ix >= w:
                                continue
                            for ci in range(c_per_group):
                                acc += float(kernel[co, ci, ky, kx]) * float(
                                    x[b, g * c_per_group + ci, iy, ix])
                    if p.bias is not None:
                        acc += float(p.bias[co])
                    out[b, co, oy, ox] = acc
    return out


def naive_batch_norm(x: np.ndarray, bn: BatchNormParams) -> np.ndarray:
    """Per-element batch normalization from the defining formula."""
    x = check_tensor(x, "input")
    out = np.zeros_like(x)
    n, c, h, w = x.shape
    for b in range(n):
        for ch in range(c):
            inv = 1.0 / ((float(bn.variance[ch]) + bn.epsilon) ** 0.5)
            for y in range(h):
                for z in range(w):
                    out[b, ch, y, z] = (
                        float(bn.gamma[ch]) * (float(x[b, ch, y, z]) - float(bn.mean[ch])) * inv
                        + float(bn.beta[ch]))
    return out


def naive_maxpool(x: np.ndarray, kernel: Tuple[int, int] = (3, 3),
                  stride: Tuple[int, int] = (2, 2)) -> np.ndarray:
    """Window-max pooling over every output position."""
    x = check_tensor(x, "input")
    n, c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    out_h = conv_output_size(h, sh)
    out_w = conv_output_size(w, sw)
    pad_top, _ = same_padding(h, kh, sh)
    pad_left, _ = same_padding(w, kw, sw)
    out = np.zeros((n, c, out_h, out_w), dtype=np.float32)
    for b in range(n):
        for ch in range(c):
            for oy in range(out_h):
                for ox in range(out_w):
                    best = -np.inf
                    for ky in range(kh):
                        iy = oy * sh - pad_top + ky
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * sw - pad_left + kx
                            if ix < 0 or ix >= w:
                                continue
                            v = float(x[b, ch, iy, ix])
                            if v > best:
                                best = v
                    out[b, ch, oy, ox] = best
    return out


def naive_global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Sum-divided-by-count spatial mean."""
    x = check_tensor(x, "input")
    n, c, h, w = x.shape
    out = np.zeros((n, c, 1, 1), dtype=np.float32)
    for b in range(n):
        for ch in range(c):
            total = 0.0
            for y in range(h):
                for z in range(w):
                    total += float(x[b, ch, y, z])
            out[b, ch, 0, 0] = total / (h * w)
    return out


def naive_bilinear_resize(x: np.ndarray, out_h: int, out_w: int,
                          align_corners: bool = True) -> np.ndarray:
    """Four-tap bilinear interpolation computed per output pixel."""
    x = check_tensor(x, "input")
    n, c, h, w = x.shape

    def coord(i, in_size, out_size):
        if in_size == 1 or (out_size == 1 and align_corners):
            return 0.0
        if align_corners:
            return i * (in_size - 1) / (out_size - 1)
        return min(max((i + 0.5) * in_size / out_size - 0.5, 0.0), in_size - 1)

    out = np.zeros((n, c, out_h, out_w), dtype=np.float32)
    for b in range(n):
        for ch in range(c):
            for oy in range(out_h):
                sy = coord(oy, h, out_h)
                y0 = int(sy)
                y1 = min(y0 + 1, h - 1)
                ty = sy - y0
                for ox in range(out_w):
                    sx = coord(ox, w, out_w)
                    x0 = int(sx)
                    x1 = min(x0 + 1, w - 1)
                    tx = sx - x0
                    top = float(x[b, ch, y0, x0]) + tx * (
                        float(x[b, ch, y0, x1]) - float(x[b, ch, y0, x0]))
                    bot = float(x[b, ch, y1, x0]) + tx * (
                        float(x[b, ch, y1, x1]) - float(x[b, ch, y1, x0]))
                    out[b, ch, oy, ox] = top + ty * (bot - top)
    return out


def naive_argmax(logits: np.ndarray) -> np.ndarray:
    """Per-pixel linear scan for the first maximal channel."""
    logits = check_tensor(logits, "logits")
    n, c, h, w = logits.shape
    out = np.zeros((n, h, w), dtype=np.int64)
    for b in range(n):
        for y in range(h):
            for z in range(w):
                best_idx = 0
                best = float(logits[b, 0, y, z])
                for ch in range(1, c):
                    v = float(logits[b, ch, y, z])
                    if v > best:
                        best = v
                        best_idx = ch
                out[b, y, z] = best_idx
    return out
