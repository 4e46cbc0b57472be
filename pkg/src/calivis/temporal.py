"""Cross-frame propagation: cost volume, temporal network, and box/coefficient/mask transfer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorio
from .errors import ValidationError
from .geometry import Box, BoxDelta, decode_box
from .maskgen import InstanceMask, assemble_mask
from .numerics import DTYPE, ConvKernel, bilinear_gather, conv2d, relu


def correlate(prev: np.ndarray, curr: np.ndarray, d_side: int) -> np.ndarray:
    """Local cost volume of shape (H, W, d_side**2).

    Channel ``u * d_side + v`` holds the channel-mean dot product of
    ``prev[y, x]`` with ``curr[y + u - r, x + v - r]``, r = (d_side - 1) // 2;
    out-of-bounds neighbours are zero.
    """
    if prev.shape != curr.shape:
        raise ValidationError(f"feature shapes differ: {prev.shape} vs {curr.shape}")
    if d_side < 1 or d_side % 2 == 0:
        raise ValidationError(f"correlation side must be odd, got {d_side}")
    h, w, c = prev.shape
    r = (d_side - 1) // 2
    padded = np.pad(curr.astype(DTYPE), ((r, r), (r, r), (0, 0)))
    p = prev.astype(DTYPE)
    out = np.empty((h, w, d_side * d_side), DTYPE)
    for u in range(d_side):
        for v in range(d_side):
            out[:, :, u * d_side + v] = np.einsum("hwc,hwc->hw", p, padded[u:u + h, v:v + w])
    out /= c
    return out


@dataclass(frozen=True)
class CrossFrameDelta:
    box_delta: BoxDelta
    coeff_delta: np.ndarray


@dataclass(frozen=True)
class TemporalNet:
    """Conv trunk (ReLU after each layer) feeding a 4-channel box head and a coefficient head.

    The input is the channel concatenation [prev, curr, correlation].
    """

    trunk: tuple
    box_head: ConvKernel
    coeff_head: ConvKernel

    def __post_init__(self):
        object.__setattr__(self, "trunk", tuple(self.trunk))
        chans = self.in_channels
        for n, k in enumerate(self.trunk):
            if k.in_channels != chans:
                raise ValidationError(f"trunk layer {n} expects {k.in_channels} channels, gets {chans}")
            chans = k.out_channels
        for name, head in (("box_head", self.box_head), ("coeff_head", self.coeff_head)):
            if head.in_channels != chans:
                raise ValidationError(f"{name} expects {head.in_channels} channels, trunk gives {chans}")
        if self.box_head.out_channels != 4:
            raise ValidationError("box head must emit 4 channels")

    @property
    def in_channels(self) -> int:
        return self.trunk[0].in_channels if self.trunk else self.box_head.in_channels

    @property
    def k_proto(self) -> int:
        return self.coeff_head.out_channels

    @classmethod
    def build(cls, feat_channels, d_side, k_proto, width=16, rng=None):
        """Default architecture: two 3x3 layers then 1x1 heads. Zero weights unless ``rng`` given."""
        c_in = 2 * feat_channels + d_side * d_side

        def make(kh, kw, ci, co):
            if rng is None:
                return ConvKernel.zeros(kh, kw, ci, co)
            return ConvKernel.random(kh, kw, ci, co, rng)

        trunk = (make(3, 3, c_in, width), make(3, 3, width, width))
        return cls(trunk, make(1, 1, width, 4), make(1, 1, width, k_proto))

    def forward(self, x: np.ndarray):
        if x.shape[2] != self.in_channels:
            raise ValidationError(f"temporal net expects {self.in_channels} channels, got {x.shape[2]}")
        for k in self.trunk:
            x = relu(conv2d(x, k))
        return conv2d(x, self.box_head), conv2d(x, self.coeff_head)

    def tensors(self) -> dict:
        out = {}
        for n, k in enumerate(self.trunk):
            out[f"trunk.{n}.weight"] = k.weights
            out[f"trunk.{n}.bias"] = k.bias
        for name in ("box_head", "coeff_head"):
            k = getattr(self, name)
            out[f"{name}.weight"] = k.weights
            out[f"{name}.bias"] = k.bias
        return out

    def manifest(self) -> list:
        return [(name, tuple(t.shape)) for name, t in self.tensors().items()]

    @classmethod
    def from_tensors(cls, tensors: dict) -> "TemporalNet":
        def kernel(prefix):
            try:
                return ConvKernel(tensors[f"{prefix}.weight"], tensors[f"{prefix}.bias"])
            except KeyError as exc:
                raise ValidationError(f"weights file missing entry {exc.args[0]!r}") from None

        trunk = []
        while f"trunk.{len(trunk)}.weight" in tensors:
            trunk.append(kernel(f"trunk.{len(trunk)}"))
        return cls(tuple(trunk), kernel("box_head"), kernel("coeff_head"))

    def save(self, path):
        tensorio.save_tensor_file(path, self.tensors())

    @classmethod
    def load(cls, path) -> "TemporalNet":
        return cls.from_tensors(tensorio.load_tensor_file(path))


def temporal_maps(prev: np.ndarray, curr: np.ndarray, corr: np.ndarray, net: TemporalNet):
    """Dense (box-delta map, coefficient-delta map) for one frame pair."""
    x = np.concatenate([prev, curr, corr], axis=2).astype(DTYPE)
    return net.forward(x)


def read_instance(box_map: np.ndarray, coeff_map: np.ndarray, box_prev: Box, stride: float) -> CrossFrameDelta:
    # cell (i, j) is centred at ((j + 0.5) * stride, (i + 0.5) * stride)
    gy = box_prev.cy / stride - 0.5
    gx = box_prev.cx / stride - 0.5
    d = bilinear_gather(box_map, gy, gx)
    dc = bilinear_gather(coeff_map, gy, gx)
    return CrossFrameDelta(BoxDelta(*(float(v) for v in d)), dc.astype(DTYPE))


def temporal_forward(prev, curr, corr, net: TemporalNet, box_prev: Box, stride: float) -> CrossFrameDelta:
    box_map, coeff_map = temporal_maps(prev, curr, corr, net)
    return read_instance(box_map, coeff_map, box_prev, stride)


def cross_frame_box(box_prev: Box, delta: BoxDelta) -> Box:
    return decode_box(box_prev, delta)


def cross_frame_coeffs(c_prev, dc) -> np.ndarray:
    c_prev = np.asarray(c_prev, DTYPE).reshape(-1)
    dc = np.asarray(dc, DTYPE).reshape(-1)
    if c_prev.shape != dc.shape:
        raise ValidationError(f"coefficient lengths differ: {c_prev.size} vs {dc.size}")
    return c_prev + dc


def cross_frame_mask(protos_curr: np.ndarray, c_cross, box_cross: Box) -> InstanceMask:
    return assemble_mask(protos_curr, c_cross, box_cross)
