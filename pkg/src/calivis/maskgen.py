"""Instance masks as sigmoid(prototypes @ coefficients), cropped to a box."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import Box
from .numerics import DTYPE, sigmoid


@dataclass(frozen=True)
class InstanceMask:
    values: np.ndarray  # (H', W') soft mask in [0, 1]
    crop_box: Box  # prototype-pixel coordinates

    @property
    def shape(self):
        return self.values.shape


def crop(values: np.ndarray, box: Box) -> np.ndarray:
    """Zero every pixel whose centre lies outside ``box`` (edges half-open)."""
    h, w = values.shape
    x1, y1, x2, y2 = box.corners()
    xc = np.arange(w) + 0.5
    yc = np.arange(h) + 0.5
    inside = ((yc >= y1) & (yc < y2))[:, None] & ((xc >= x1) & (xc < x2))[None, :]
    return np.where(inside, values, 0).astype(values.dtype)


def assemble_mask(prototypes: np.ndarray, coeffs, box: Box) -> InstanceMask:
    coeffs = np.asarray(coeffs, DTYPE).reshape(-1)
    h, w, k = prototypes.shape
    if coeffs.size != k:
        raise ValidationError(f"{coeffs.size} coefficients for {k} prototypes")
    logits = prototypes.reshape(h * w, k).astype(np.float64) @ coeffs.astype(np.float64)
    soft = sigmoid(logits.reshape(h, w))
    return InstanceMask(crop(soft, box), box)


def binarize(mask, threshold: float = 0.5) -> np.ndarray:
    values = mask.values if isinstance(mask, InstanceMask) else np.asarray(mask)
    return (values >= threshold).astype(np.uint8)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two binary masks; 0 when both are empty."""
    a = np.asarray(a, bool)
    b = np.asarray(b, bool)
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union
