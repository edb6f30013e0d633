"""Dense float32 tensor primitives: convolution, pooling, activations, dense, softmax.

All values are stored as float32 in channels-last row-major layout; reductions
(conv2d, dense) accumulate in float64 with a fixed summation order so that
repeated evaluation is bitwise identical across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class Tensor:
    """A (height, width, channels) float32 array.

    The flat row-major view indexes as (y * width + x) * channels + ch.
    """

    arr: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arr)
        if a.ndim != 3:
            raise DimensionMismatch(f"tensor must be 3-d (h, w, c), got shape {a.shape}")
        if any(d < 1 for d in a.shape):
            raise DimensionMismatch(f"tensor dims must be positive, got {a.shape}")
        if a.dtype != np.float32 or not a.flags.c_contiguous:
            a = np.ascontiguousarray(a, dtype=np.float32)
        object.__setattr__(self, "arr", a)

    @property
    def height(self) -> int:
        return self.arr.shape[0]

    @property
    def width(self) -> int:
        return self.arr.shape[1]

    @property
    def channels(self) -> int:
        return self.arr.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Flat row-major float32 view."""
        return self.arr.reshape(-1)

    @classmethod
    def from_flat(cls, height: int, width: int, channels: int, values) -> "Tensor":
        flat = np.asarray(values, dtype=np.float32)
        if flat.size != height * width * channels:
            raise DimensionMismatch(
                f"expected {height * width * channels} values, got {flat.size}"
            )
        return cls(flat.reshape(height, width, channels))

    @classmethod
    def full(cls, height: int, width: int, channels: int, value: float) -> "Tensor":
        return cls(np.full((height, width, channels), value, dtype=np.float32))

    def same_as(self, other: "Tensor") -> bool:
        """Bitwise equality (shape and every element)."""
        return self.arr.shape == other.arr.shape and np.array_equal(
            self.arr.view(np.uint32), other.arr.view(np.uint32)
        )


@dataclass(frozen=True, eq=False)
class ConvWeights:
    """Convolution parameters; weights laid out (ky, kx, cin, cout)."""

    kh: int
    kw: int
    cin: int
    cout: int
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("kh", "kw", "cin", "cout"):
            if getattr(self, name) < 1:
                raise DimensionMismatch(f"{name} must be >= 1")
        if self.stride < 1:
            raise DimensionMismatch("stride must be >= 1")
        if self.padding < 0:
            raise DimensionMismatch("padding must be >= 0")
        w = np.asarray(self.weights, dtype=np.float32)
        if w.size != self.kh * self.kw * self.cin * self.cout:
            raise DimensionMismatch(
                f"weight array has {w.size} values, dims declare "
                f"{self.kh * self.kw * self.cin * self.cout}"
            )
        b = np.asarray(self.bias, dtype=np.float32)
        if b.size != self.cout:
            raise DimensionMismatch(f"bias length {b.size} != cout {self.cout}")
        object.__setattr__(
            self, "weights", np.ascontiguousarray(w.reshape(self.kh, self.kw, self.cin, self.cout))
        )
        object.__setattr__(self, "bias", np.ascontiguousarray(b.reshape(self.cout)))

    def weight_sums(self) -> np.ndarray:
        """Per-output-channel sum of kernel weights, float64."""
        return self.weights.astype(np.float64).sum(axis=(0, 1, 2))


def _out_dim(size: int, kernel: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise DimensionMismatch(
            f"window {kernel} stride {stride} pad {padding} does not tile extent {size}"
        )
    return span // stride + 1


def conv2d(x: Tensor, w: ConvWeights) -> Tensor:
    """2-D convolution with zero padding and bias.

    out[y, x, co] = bias[co] + sum over (ky, kx, ci) of weight * input, the sum
    taken in ascending (ky, kx, ci) order on float64 accumulators.
    """
    if x.channels != w.cin:
        raise DimensionMismatch(f"input has {x.channels} channels, weights expect {w.cin}")
    oh = _out_dim(x.height, w.kh, w.stride, w.padding)
    ow = _out_dim(x.width, w.kw, w.stride, w.padding)

    p = w.padding
    padded = np.zeros((x.height + 2 * p, x.width + 2 * p, w.cin), dtype=np.float64)
    padded[p:p + x.height, p:p + x.width, :] = x.arr

    w64 = w.weights.astype(np.float64)
    acc = np.empty((oh, ow, w.cout), dtype=np.float64)
    acc[:] = w.bias.astype(np.float64)
    s = w.stride
    for ky in range(w.kh):
        for kx in range(w.kw):
            for ci in range(w.cin):
                patch = padded[ky:ky + s * oh:s, kx:kx + s * ow:s, ci]
                acc += patch[:, :, None] * w64[ky, kx, ci]
    return Tensor(acc.astype(np.float32))


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.arr, np.float32(0.0)))


def maxpool2d(x: Tensor, window: int, stride: int) -> Tensor:
    """Per-channel max over each window; exact (max introduces no rounding)."""
    if window < 1 or stride < 1:
        raise DimensionMismatch("window and stride must be >= 1")
    oh = _out_dim(x.height, window, stride, 0)
    ow = _out_dim(x.width, window, stride, 0)
    out = x.arr[0:stride * oh:stride, 0:stride * ow:stride, :].copy()
    for wy in range(window):
        for wx in range(window):
            if wy == 0 and wx == 0:
                continue
            np.maximum(out, x.arr[wy:wy + stride * oh:stride, wx:wx + stride * ow:stride, :], out=out)
    return Tensor(out)


def affine_channel(x: Tensor, scale: np.ndarray, shift: np.ndarray) -> Tensor:
    """out[..., ch] = x[..., ch] * scale[ch] + shift[ch] (float64 intermediate)."""
    scale = np.asarray(scale, dtype=np.float32)
    shift = np.asarray(shift, dtype=np.float32)
    if scale.size != x.channels or shift.size != x.channels:
        raise DimensionMismatch(
            f"scale/shift lengths ({scale.size}, {shift.size}) != channels {x.channels}"
        )
    out = x.arr.astype(np.float64) * scale.astype(np.float64) + shift.astype(np.float64)
    return Tensor(out.astype(np.float32))


def dense(x: Tensor, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Fully connected layer on the flattened input.

    out[o] = bias[o] + sum_i weights[o, i] * flat[i], float64 accumulation in
    ascending i (cumsum gives the sequential left-to-right order).
    """
    weights = np.asarray(weights, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if weights.ndim != 2:
        raise DimensionMismatch(f"dense weights must be 2-d (out, in), got {weights.shape}")
    out_dim, in_dim = weights.shape
    if bias.size != out_dim:
        raise DimensionMismatch(f"bias length {bias.size} != out dim {out_dim}")
    flat = x.data
    if flat.size != in_dim:
        raise DimensionMismatch(f"flattened input has {flat.size} values, weights expect {in_dim}")
    terms = weights.astype(np.float64) * flat.astype(np.float64)[None, :]
    chain = np.concatenate([bias.astype(np.float64)[:, None], terms], axis=1)
    return np.cumsum(chain, axis=1)[:, -1].astype(np.float32)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; float64 internally, float32 out."""
    z = np.asarray(logits, dtype=np.float32)
    if z.ndim != 1 or z.size < 1:
        raise DimensionMismatch(f"softmax expects a non-empty vector, got shape {z.shape}")
    z64 = z.astype(np.float64)
    e = np.exp(z64 - z64.max())
    return (e / e.sum()).astype(np.float32)
