"""Center-format boxes, regression deltas, IoU, NMS and anchor tiling.

Box arithmetic runs in float64; boxes are tiny and the encode/decode round
trip is expected to hold to 1e-5 relative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box needs positive size, got w={self.w}, h={self.h}")

    def corners(self):
        """(x1, y1, x2, y2)."""
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], np.float64)

    def scaled(self, sx: float, sy: float) -> "Box":
        return Box(self.cx * sx, self.cy * sy, self.w * sx, self.h * sy)


@dataclass(frozen=True)
class BoxDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh], np.float64)


def decode_box(anchor: Box, delta: BoxDelta) -> Box:
    try:
        w = anchor.w * math.exp(delta.dw)
        h = anchor.h * math.exp(delta.dh)
    except OverflowError as exc:
        raise ValidationError(f"box decode overflow for delta {delta}") from exc
    return Box(anchor.w * delta.dx + anchor.cx, anchor.h * delta.dy + anchor.cy, w, h)


def encode_box(anchor: Box, gt: Box) -> BoxDelta:
    if gt.w <= 0 or gt.h <= 0:
        raise ValidationError("target box must have positive size")
    return BoxDelta(
        (gt.cx - anchor.cx) / anchor.w,
        (gt.cy - anchor.cy) / anchor.h,
        math.log(gt.w / anchor.w),
        math.log(gt.h / anchor.h),
    )


def decode_boxes(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decode_box` over ``(N, 4)`` arrays."""
    a = np.asarray(anchors, np.float64)
    d = np.asarray(deltas, np.float64)
    with np.errstate(over="ignore"):
        out = np.stack(
            [
                a[:, 2] * d[:, 0] + a[:, 0],
                a[:, 3] * d[:, 1] + a[:, 1],
                a[:, 2] * np.exp(d[:, 2]),
                a[:, 3] * np.exp(d[:, 3]),
            ],
            axis=1,
        )
    if not np.all(np.isfinite(out)):
        raise ValidationError("box decode produced non-finite values")
    return out


def to_corners(boxes: np.ndarray) -> np.ndarray:
    b = np.asarray(boxes, np.float64)
    half = b[:, 2:] / 2
    return np.concatenate([b[:, :2] - half, b[:, :2] + half], axis=1)


def box_iou(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return min(1.0, inter / union)


def _iou_one_to_many(c: np.ndarray, cs: np.ndarray) -> np.ndarray:
    iw = np.clip(np.minimum(c[2], cs[:, 2]) - np.maximum(c[0], cs[:, 0]), 0, None)
    ih = np.clip(np.minimum(c[3], cs[:, 3]) - np.maximum(c[1], cs[:, 1]), 0, None)
    inter = iw * ih
    area = (c[2] - c[0]) * (c[3] - c[1])
    areas = (cs[:, 2] - cs[:, 0]) * (cs[:, 3] - cs[:, 1])
    return inter / (area + areas - inter)


def nms_arrays(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, top_k: int) -> list[int]:
    """Greedy NMS over center-format ``(N, 4)`` boxes.

    Returns kept indices in descending score order; equal scores keep the
    lower index first.
    """
    scores = np.asarray(scores, np.float64)
    if scores.size == 0 or top_k <= 0:
        return []
    corners = to_corners(boxes)
    order = np.argsort(-scores, kind="stable")
    keep = []
    while order.size and len(keep) < top_k:
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        ious = _iou_one_to_many(corners[i], corners[rest])
        order = rest[ious <= iou_threshold]
    return keep


def nms(detections, iou_threshold: float = 0.5, top_k: int = 100) -> list[int]:
    """NMS over a list of ``(Box, score)`` pairs."""
    if not detections:
        return []
    boxes = np.array([b.as_array() for b, _ in detections])
    scores = np.array([s for _, s in detections], np.float64)
    return nms_arrays(boxes, scores, iou_threshold, top_k)


@dataclass(frozen=True)
class AnchorSet:
    """Anchors as an ``(H, W, A, 4)`` center-format array, ``A`` = len(aspect_ratios)."""

    boxes: np.ndarray
    stride: float
    scale: float
    aspect_ratios: tuple

    @property
    def grid_shape(self):
        return self.boxes.shape[:2]

    @property
    def num_anchors(self) -> int:
        return self.boxes.shape[2]

    def box(self, i: int, j: int, a: int) -> Box:
        return Box(*self.boxes[i, j, a])


def generate_anchors(grid_h: int, grid_w: int, stride: float, scale: float, aspect_ratios) -> AnchorSet:
    """Tile one anchor per aspect ratio (w / h) on every cell, keeping area = scale**2."""
    if grid_h <= 0 or grid_w <= 0 or stride <= 0 or scale <= 0:
        raise ValidationError("anchor grid, stride and scale must be positive")
    ratios = tuple(float(r) for r in aspect_ratios)
    if not ratios or any(r <= 0 for r in ratios):
        raise ValidationError(f"aspect ratios must be positive, got {ratios}")
    cy = (np.arange(grid_h) + 0.5) * stride
    cx = (np.arange(grid_w) + 0.5) * stride
    boxes = np.empty((grid_h, grid_w, len(ratios), 4), np.float64)
    boxes[..., 0] = cx[None, :, None]
    boxes[..., 1] = cy[:, None, None]
    for a, r in enumerate(ratios):
        boxes[:, :, a, 2] = scale * math.sqrt(r)
        boxes[:, :, a, 3] = scale / math.sqrt(r)
    return AnchorSet(boxes, float(stride), float(scale), ratios)
