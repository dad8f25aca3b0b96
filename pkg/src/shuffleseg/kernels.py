"""Dense NCHW tensor kernels: convolution, pooling, resizing, channel ops.

All operations are pure functions over float32 arrays in (batch, channels,
height, width) layout. Convolutions use SAME padding (output spatial size =
ceil(input / stride), extra padding pixel on the bottom/right). Accumulation
is float32 with a fixed tap order (ky, kx, cin) and never dispatches to BLAS,
so results are bit-identical across runs and thread configurations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ShapeError",
    "ConvParams",
    "BatchNormParams",
    "check_tensor",
    "as_tensor",
    "same_padding",
    "conv_output_size",
    "conv2d",
    "batch_norm",
    "batch_norm_fold",
    "relu",
    "maxpool",
    "global_avg_pool",
    "channel_split",
    "channel_shuffle",
    "concat_channels",
    "bilinear_resize",
    "argmax_channels",
]


class ShapeError(ValueError):
    """Tensor or parameter shapes are inconsistent with an operation."""


def check_tensor(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate that `x` is a canonical (n, c, h, w) float32 tensor."""
    if not isinstance(x, np.ndarray):
        raise ShapeError(f"{name}: expected ndarray, got {type(x).__name__}")
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected rank-4 (n, c, h, w), got rank {x.ndim}")
    if any(d < 1 for d in x.shape):
        raise ShapeError(f"{name}: all dimensions must be positive, got {x.shape}")
    if x.dtype != np.float32:
        raise ShapeError(f"{name}: expected float32, got {x.dtype}")
    return x


def as_tensor(array, shape: Optional[Tuple[int, int, int, int]] = None) -> np.ndarray:
    """Coerce `array` to a contiguous float32 NCHW tensor, optionally reshaping."""
    x = np.ascontiguousarray(array, dtype=np.float32)
    if shape is not None:
        x = x.reshape(shape)
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 data, got rank {x.ndim}")
    return check_tensor(x)


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


@dataclass(frozen=True, eq=False)
class ConvParams:
    """Convolution parameters: kernel (c_out, c_in_per_group, kh, kw), SAME padding.

    `rate` is the atrous dilation; rate (1, 1) is a standard convolution.
    The depthwise case is groups == input channels with c_in_per_group == 1.
    """

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: Tuple[int, int] = (1, 1)
    rate: Tuple[int, int] = (1, 1)
    groups: int = 1

    def __post_init__(self):
        kernel = np.ascontiguousarray(self.kernel, dtype=np.float32)
        if kernel.ndim != 4:
            raise ShapeError(f"kernel: expected rank-4, got rank {kernel.ndim}")
        if any(d < 1 for d in kernel.shape):
            raise ShapeError(f"kernel: zero-size kernel rejected, shape {kernel.shape}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "rate", _pair(self.rate))
        object.__setattr__(self, "groups", int(self.groups))
        if self.stride[0] < 1 or self.stride[1] < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.rate[0] < 1 or self.rate[1] < 1:
            raise ShapeError(f"rate must be >= 1, got {self.rate}")
        if self.groups < 1:
            raise ShapeError(f"groups must be >= 1, got {self.groups}")
        c_out = kernel.shape[0]
        if c_out % self.groups != 0:
            raise ShapeError(f"output channels {c_out} not divisible by groups {self.groups}")
        if self.bias is not None:
            bias = np.ascontiguousarray(self.bias, dtype=np.float32)
            if bias.shape != (c_out,):
                raise ShapeError(f"bias: expected shape ({c_out},), got {bias.shape}")
            object.__setattr__(self, "bias", bias)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1] * self.groups


@dataclass(frozen=True, eq=False)
class BatchNormParams:
    """Inference-time batch normalization statistics for `c` channels."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        vecs = {}
        for field in ("gamma", "beta", "mean", "variance"):
            v = np.ascontiguousarray(getattr(self, field), dtype=np.float32)
            if v.ndim != 1:
                raise ShapeError(f"{field}: expected a vector, got shape {v.shape}")
            vecs[field] = v
        c = vecs["gamma"].shape[0]
        for field, v in vecs.items():
            if v.shape != (c,):
                raise ShapeError(f"{field}: expected shape ({c},), got {v.shape}")
            object.__setattr__(self, field, v)
        if np.any(vecs["variance"] < 0):
            raise ShapeError("variance must be non-negative elementwise")
        if not self.epsilon > 0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def same_padding(size: int, kernel: int, stride: int, rate: int = 1) -> Tuple[int, int]:
    """SAME padding (before, after) for one axis; extra pixel goes after."""
    effective = (kernel - 1) * rate + 1
    out = -(-size // stride)
    total = max((out - 1) * stride + effective - size, 0)
    return total // 2, total - total // 2


def conv_output_size(size: int, stride: int) -> int:
    """Spatial output size under SAME padding: ceil(size / stride)."""
    return -(-size // stride)


def _pad_spatial(x: np.ndarray, pads, value: float = 0.0) -> np.ndarray:
    (pt, pb), (pl, pr) = pads
    if pt == pb == pl == pr == 0:
        return x
    n, c, h, w = x.shape
    out = np.full((n, c, h + pt + pb, w + pl + pr), value, dtype=x.dtype)
    out[:, :, pt : pt + h, pl : pl + w] = x
    return out


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """2D convolution with SAME padding, atrous rates, and channel groups.

    Output shape is (n, c_out, ceil(h/s_h), ceil(w/s_w)). Taps accumulate in
    fixed (ky, kx, cin) order; the channel contraction uses einsum with
    optimize=False, which stays on NumPy's single-threaded path.
    """
    x = check_tensor(x, "input")
    n, c_in, h, w = x.shape
    c_out, c_per_group, kh, kw = p.kernel.shape
    if c_per_group * p.groups != c_in:
        raise ShapeError(
            f"input channels {c_in} incompatible with kernel channels "
            f"{c_per_group} x groups {p.groups}"
        )
    sh, sw = p.stride
    rh, rw = p.rate
    out_h = conv_output_size(h, sh)
    out_w = conv_output_size(w, sw)
    xp = _pad_spatial(x, (same_padding(h, kh, sh, rh), same_padding(w, kw, sw, rw)))

    out = np.zeros((n, c_out, out_h, out_w), dtype=np.float32)
    depthwise = p.groups == c_in and c_per_group == 1 and c_out == c_in
    cog = c_out // p.groups
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, :, ky * rh : ky * rh + sh * out_h : sh,
                       kx * rw : kx * rw + sw * out_w : sw]
            if depthwise:
                out += p.kernel[:, 0, ky, kx][None, :, None, None] * patch
            elif p.groups == 1:
                out += np.einsum("oi,nihw->nohw", p.kernel[:, :, ky, kx], patch,
                                 optimize=False)
            else:
                for g in range(p.groups):
                    out[:, g * cog : (g + 1) * cog] += np.einsum(
                        "oi,nihw->nohw",
                        p.kernel[g * cog : (g + 1) * cog, :, ky, kx],
                        patch[:, g * c_per_group : (g + 1) * c_per_group],
                        optimize=False,
                    )
    if p.bias is not None:
        out += p.bias[None, :, None, None]
    return out


def batch_norm(x: np.ndarray, bn: BatchNormParams) -> np.ndarray:
    """Apply inference-time batch normalization per channel."""
    x = check_tensor(x, "input")
    if x.shape[1] != bn.channels:
        raise ShapeError(f"input channels {x.shape[1]} != batch-norm channels {bn.channels}")
    scale = (bn.gamma.astype(np.float64)
             / np.sqrt(bn.variance.astype(np.float64) + bn.epsilon))
    shift = bn.beta.astype(np.float64) - bn.mean.astype(np.float64) * scale
    scale32 = scale.astype(np.float32)
    shift32 = shift.astype(np.float32)
    return x * scale32[None, :, None, None] + shift32[None, :, None, None]


def batch_norm_fold(p: ConvParams, bn: BatchNormParams) -> ConvParams:
    """Fold a batch-norm layer into the preceding convolution's kernel and bias.

    Satisfies conv(x, folded) == batch_norm(conv(x, p), bn) up to float32
    rounding. The scale gamma / sqrt(variance + epsilon) is computed in
    float64 before casting back.
    """
    if bn.channels != p.out_channels:
        raise ShapeError(
            f"batch-norm channels {bn.channels} != conv output channels {p.out_channels}"
        )
    scale = (bn.gamma.astype(np.float64)
             / np.sqrt(bn.variance.astype(np.float64) + bn.epsilon))
    kernel = (p.kernel.astype(np.float64) * scale[:, None, None, None]).astype(np.float32)
    old_bias = p.bias.astype(np.float64) if p.bias is not None else 0.0
    bias = (bn.beta.astype(np.float64)
            + (old_bias - bn.mean.astype(np.float64)) * scale).astype(np.float32)
    return ConvParams(kernel=kernel, bias=bias, stride=p.stride, rate=p.rate,
                      groups=p.groups)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(check_tensor(x), np.float32(0.0))


def maxpool(x: np.ndarray, kernel: Tuple[int, int] = (3, 3),
            stride: Tuple[int, int] = (2, 2)) -> np.ndarray:
    """Max pooling with SAME padding (pad value -inf)."""
    x = check_tensor(x, "input")
    n, c, h, w = x.shape
    (kh, kw), (sh, sw) = _pair(kernel), _pair(stride)
    out_h = conv_output_size(h, sh)
    out_w = conv_output_size(w, sw)
    xp = _pad_spatial(x, (same_padding(h, kh, sh), same_padding(w, kw, sw)),
                      value=-np.inf)
    out = np.full((n, c, out_h, out_w), -np.inf, dtype=np.float32)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, :, ky : ky + sh * out_h : sh, kx : kx + sw * out_w : sw]
            np.maximum(out, patch, out=out)
    return out


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Spatial mean per channel, output shape (n, c, 1, 1)."""
    x = check_tensor(x, "input")
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)


def channel_split(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split channels into first and second halves; channel count must be even."""
    x = check_tensor(x, "input")
    c = x.shape[1]
    if c % 2 != 0:
        raise ShapeError(f"channel_split requires an even channel count, got {c}")
    half = c // 2
    return (np.ascontiguousarray(x[:, :half]), np.ascontiguousarray(x[:, half:]))


def channel_shuffle(x: np.ndarray, groups: int) -> np.ndarray:
    """Interleave channel groups: output channel i reads (i % g)*(c/g) + i // g."""
    x = check_tensor(x, "input")
    c = x.shape[1]
    g = int(groups)
    if g < 1 or c % g != 0:
        raise ShapeError(f"channel count {c} not divisible by groups {g}")
    per = c // g
    src = [(i % g) * per + i // g for i in range(c)]
    return np.ascontiguousarray(x[:, src])


def concat_channels(inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Stack tensors along the channel axis in argument order."""
    if not inputs:
        raise ShapeError("concat_channels requires at least one input")
    tensors = [check_tensor(t, f"inputs[{i}]") for i, t in enumerate(inputs)]
    first = tensors[0]
    for i, t in enumerate(tensors[1:], start=1):
        for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
            if t.shape[axis] != first.shape[axis]:
                raise ShapeError(
                    f"inputs[{i}]: {name} {t.shape[axis]} != inputs[0] {name} "
                    f"{first.shape[axis]}"
                )
    return np.ascontiguousarray(np.concatenate(tensors, axis=1))


def _resize_coords(in_size: int, out_size: int, align_corners: bool) -> np.ndarray:
    if in_size == 1 or (out_size == 1 and align_corners):
        return np.zeros(out_size, dtype=np.float64)
    if align_corners:
        return np.arange(out_size, dtype=np.float64) * (in_size - 1) / (out_size - 1)
    coords = (np.arange(out_size, dtype=np.float64) + 0.5) * in_size / out_size - 0.5
    return np.clip(coords, 0.0, in_size - 1)


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int,
                    align_corners: bool = True) -> np.ndarray:
    """Bilinear interpolation to (out_h, out_w).

    Uses the a + t*(b - a) form in float64 so constant inputs are preserved
    exactly and outputs never leave the input's value range.
    """
    x = check_tensor(x, "input")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    ys = _resize_coords(h, out_h, align_corners)
    xs = _resize_coords(w, out_w, align_corners)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, None, :, None]
    wx = (xs - x0)[None, None, None, :]

    data = x.astype(np.float64)
    rows = data[:, :, y0, :]
    rows = rows + wy * (data[:, :, y1, :] - rows)
    out = rows[:, :, :, x0]
    out = out + wx * (rows[:, :, :, x1] - out)
    return out.astype(np.float32)


def argmax_channels(logits: np.ndarray) -> np.ndarray:
    """Per-pixel index of the maximum channel; ties go to the lowest index."""
    logits = check_tensor(logits, "logits")
    return np.argmax(logits, axis=1).astype(np.int64)
