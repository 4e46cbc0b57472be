"""Feature calibration: per-aspect head kernels and box-driven deformable sampling.

Offset fields have shape ``(H, W, 2 * k_h * k_w)``; channel ``2n`` is the
y-offset and ``2n + 1`` the x-offset of grid point ``n``, grid points in
row-major order. Offsets are in feature-grid units.

The aligned offsets assume the anchor at each position spans exactly the
kernel grid (``k_w`` by ``k_h`` cells, unit spacing). Under that convention
sampling at ``p0 + p_n + offset_n`` hits the centre of bin ``n`` when the
decoded box is split into ``k_h x k_w`` equal bins, which is what
:func:`roialign_center_oracle` computes directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import Box, BoxDelta
from .numerics import DTYPE, ConvKernel, bilinear_gather, conv2d

FCB_MODES = ("none", "adaptive", "aligned")


@dataclass(frozen=True)
class KernelGrid:
    k_h: int
    k_w: int

    def __post_init__(self):
        if self.k_h < 1 or self.k_w < 1 or self.k_h % 2 == 0 or self.k_w % 2 == 0:
            raise ValidationError(f"kernel grid must be odd-sized, got {self.k_h}x{self.k_w}")

    @classmethod
    def of(cls, kernel: ConvKernel) -> "KernelGrid":
        return cls(kernel.k_h, kernel.k_w)

    @property
    def size(self) -> int:
        return self.k_h * self.k_w

    @property
    def points(self) -> list[tuple[int, int]]:
        rh, rw = (self.k_h - 1) // 2, (self.k_w - 1) // 2
        return [(i, j) for i in range(-rh, rh + 1) for j in range(-rw, rw + 1)]

    def point_array(self) -> np.ndarray:
        return np.array(self.points, np.float64).reshape(-1, 2)


def aligned_offsets(delta: BoxDelta, grid: KernelGrid) -> np.ndarray:
    """Closed-form ``(k_h * k_w, 2)`` array of (dy, dx) offsets for one delta."""
    shift = np.array([grid.k_h * delta.dy, grid.k_w * delta.dx])
    stretch = np.array([math.expm1(delta.dh), math.expm1(delta.dw)])
    return shift[None, :] + stretch[None, :] * grid.point_array()


def aligned_offset_field(delta_field: np.ndarray, grid: KernelGrid) -> np.ndarray:
    """Aligned offsets for every position of an ``(H, W, 4)`` delta field."""
    d = np.asarray(delta_field, np.float64)
    if d.ndim != 3 or d.shape[2] != 4:
        raise ValidationError(f"delta field must be (H, W, 4), got {d.shape}")
    pts = grid.point_array()
    shift_y = grid.k_h * d[..., 1:2]
    shift_x = grid.k_w * d[..., 0:1]
    off_y = shift_y + np.expm1(d[..., 3:4]) * pts[:, 0]
    off_x = shift_x + np.expm1(d[..., 2:3]) * pts[:, 1]
    out = np.stack([off_y, off_x], axis=-1).reshape(d.shape[0], d.shape[1], 2 * grid.size)
    return out.astype(DTYPE)


def adaptive_offsets(delta_field: np.ndarray, offset_head: ConvKernel) -> np.ndarray:
    """Learned offsets: a 1x1 convolution over the 4-channel delta field."""
    if delta_field.shape[2] != 4:
        raise ValidationError(f"delta field must have 4 channels, got {delta_field.shape[2]}")
    if offset_head.k_h != 1 or offset_head.k_w != 1:
        raise ValidationError("offset head must be a 1x1 convolution")
    if offset_head.out_channels % 2:
        raise ValidationError("offset head must emit an even number of channels")
    return conv2d(delta_field, offset_head)


def deformable_conv(t: np.ndarray, k: ConvKernel, offsets: np.ndarray) -> np.ndarray:
    h, w, c = t.shape
    grid = KernelGrid.of(k)
    if c != k.in_channels:
        raise ValidationError(f"input has {c} channels, kernel expects {k.in_channels}")
    if offsets.shape != (h, w, 2 * grid.size):
        raise ValidationError(f"offset field shape {offsets.shape} != {(h, w, 2 * grid.size)}")
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rh, rw = (k.k_h - 1) // 2, (k.k_w - 1) // 2
    wts = k.weights.astype(np.float64)
    off = offsets.astype(np.float64)
    out = np.zeros((h, w, k.out_channels), np.float64)
    for n, (pi, pj) in enumerate(grid.points):
        sampled = bilinear_gather(t, ys + pi + off[..., 2 * n], xs + pj + off[..., 2 * n + 1])
        out += sampled @ wts[pi + rh, pj + rw]
    out += k.bias
    return out.astype(DTYPE)


def roialign_center_oracle(box: Box, grid: KernelGrid) -> np.ndarray:
    """Bin-centre sampling positions of ``box`` split into ``k_h x k_w`` bins.

    ``box`` is in feature-grid units with (cx, cy) = (x, y). Returns a
    ``(k_h * k_w, 2)`` array of absolute (y, x) positions, row-major.
    """
    x1 = box.cx - box.w / 2
    y1 = box.cy - box.h / 2
    bin_w = box.w / grid.k_w
    bin_h = box.h / grid.k_h
    out = []
    for r in range(grid.k_h):
        for c in range(grid.k_w):
            out.append((y1 + (r + 0.5) * bin_h, x1 + (c + 0.5) * bin_w))
    return np.array(out, np.float64)


def check_aspects(kernels, anchor_ratios, rtol=1e-3):
    """Each kernel's width/height must equal the anchor ratio at the same index."""
    if len(kernels) != len(anchor_ratios):
        raise ValidationError(f"{len(kernels)} head kernels for {len(anchor_ratios)} anchor ratios")
    for n, (k, r) in enumerate(zip(kernels, anchor_ratios)):
        k_w, k_h = (k.k_w, k.k_h) if isinstance(k, ConvKernel) else k
        if abs(k_w / k_h - r) > rtol * r:
            raise ValidationError(f"kernel {n} is {k_w}w x {k_h}h but anchor ratio is {r}")


def fca_head(t: np.ndarray, kernels, anchor_ratios) -> list[np.ndarray]:
    """One convolution per anchor shape, output ``i`` feeding anchor ``i``."""
    check_aspects(kernels, anchor_ratios)
    return [conv2d(t, k) for k in kernels]


def fcb_head(t: np.ndarray, kernels, delta_fields, mode: str, offset_heads=None) -> list[np.ndarray]:
    """Per-anchor head features re-sampled from the regressed boxes.

    ``delta_fields[a]`` is the ``(H, W, 4)`` regression output of anchor ``a``.
    ``mode`` is one of ``none``, ``adaptive``, ``aligned``.
    """
    if mode not in FCB_MODES:
        raise ValidationError(f"unknown fcb mode {mode!r}")
    if mode == "none":
        return [conv2d(t, k) for k in kernels]
    if len(delta_fields) != len(kernels):
        raise ValidationError("need one delta field per head kernel")
    outs = []
    for a, k in enumerate(kernels):
        if mode == "aligned":
            off = aligned_offset_field(delta_fields[a], KernelGrid.of(k))
        else:
            if offset_heads is None or len(offset_heads) != len(kernels):
                raise ValidationError("adaptive mode needs one offset head per kernel")
            off = adaptive_offsets(np.asarray(delta_fields[a], DTYPE), offset_heads[a])
        outs.append(deformable_conv(t, k, off))
    return outs
