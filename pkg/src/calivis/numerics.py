"""Dense rank-3 tensors, bilinear sampling and stride-1 convolution.

Layout: a tensor is a C-contiguous ``float32`` numpy array of shape
``(height, width, channels)``; channel is the fastest-varying axis. The
tensor container format in :mod:`calivis.tensorio` stores exactly this byte
order. Out-of-bounds reads are zero (zero padding) everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DTYPE = np.float32


def as_tensor3(data, name="tensor") -> np.ndarray:
    t = np.ascontiguousarray(data, dtype=DTYPE)
    if t.ndim != 3:
        raise ValidationError(f"{name}: expected rank-3 (H, W, C) array, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValidationError(f"{name}: non-finite values")
    return t


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights of shape ``(k_h, k_w, in_channels, out_channels)``."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=DTYPE)
        b = np.ascontiguousarray(self.bias, dtype=DTYPE).reshape(-1)
        if w.ndim != 4:
            raise ValidationError(f"kernel weights must be rank 4, got shape {w.shape}")
        k_h, k_w, _, c_out = w.shape
        if k_h < 1 or k_w < 1 or k_h % 2 == 0 or k_w % 2 == 0:
            raise ValidationError(f"kernel size must be odd and >= 1, got {k_h}x{k_w}")
        if b.shape != (c_out,):
            raise ValidationError(f"bias length {b.size} != out_channels {c_out}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def k_h(self) -> int:
        return self.weights.shape[0]

    @property
    def k_w(self) -> int:
        return self.weights.shape[1]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[3]

    @classmethod
    def zeros(cls, k_h, k_w, in_channels, out_channels):
        return cls(np.zeros((k_h, k_w, in_channels, out_channels), DTYPE), np.zeros(out_channels, DTYPE))

    @classmethod
    def random(cls, k_h, k_w, in_channels, out_channels, rng: np.random.Generator, scale=None):
        if scale is None:
            scale = 1.0 / np.sqrt(k_h * k_w * in_channels)
        w = rng.normal(0.0, scale, size=(k_h, k_w, in_channels, out_channels))
        b = rng.normal(0.0, scale, size=out_channels)
        return cls(w.astype(DTYPE), b.astype(DTYPE))


def bilinear_gather(t: np.ndarray, ys, xs) -> np.ndarray:
    """Sample all channels of ``t`` at fractional positions.

    ``ys`` and ``xs`` broadcast together to some shape ``S``; the result has
    shape ``S + (C,)`` in float64. Taps outside the grid contribute zero.
    """
    h, w, _ = t.shape
    ys, xs = np.broadcast_arrays(np.asarray(ys, np.float64), np.asarray(xs, np.float64))
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    out = np.zeros(ys.shape + (t.shape[2],), np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yi = y0 + dy
            xi = x0 + dx
            valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            vals = t[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += (wy * wx * valid)[..., None] * vals
    return out


def bilinear_sample(t: np.ndarray, y: float, x: float, c: int) -> float:
    if not 0 <= c < t.shape[2]:
        raise ValidationError(f"channel index {c} out of range for {t.shape[2]} channels")
    return float(bilinear_gather(t, y, x)[c])


def conv2d(t: np.ndarray, k: ConvKernel) -> np.ndarray:
    """Stride-1, dilation-1 convolution with 'same' zero padding."""
    if t.shape[2] != k.in_channels:
        raise ValidationError(f"input has {t.shape[2]} channels, kernel expects {k.in_channels}")
    h, w, _ = t.shape
    ph, pw = (k.k_h - 1) // 2, (k.k_w - 1) // 2
    padded = np.pad(t.astype(np.float64), ((ph, ph), (pw, pw), (0, 0)))
    wts = k.weights.astype(np.float64)
    out = np.zeros((h, w, k.out_channels), np.float64)
    for i in range(k.k_h):
        for j in range(k.k_w):
            out += padded[i:i + h, j:j + w] @ wts[i, j]
    out += k.bias
    return out.astype(DTYPE)


def sigmoid(t) -> np.ndarray:
    x = np.asarray(t, np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # keep the open interval after rounding to float32
    return np.clip(out, _SIG_LO, _SIG_HI).astype(DTYPE)


_SIG_LO = float(np.finfo(DTYPE).tiny)
_SIG_HI = float(np.nextafter(DTYPE(1), DTYPE(0)))


def relu(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0).astype(DTYPE)
