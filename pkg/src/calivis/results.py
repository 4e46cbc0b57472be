"""Run-length codes, the results document, and PPM overlays."""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import ValidationError
from .tensorio import atomic_write

# Overlay colours, track id n uses PALETTE[(n - 1) % len(PALETTE)].
PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (170, 110, 40),
)
OVERLAY_ALPHA = 0.5
BACKGROUND = 64


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major uncompressed counts, starting with a (possibly empty) background run."""
    m = np.asarray(mask).astype(bool)
    flat = m.reshape(-1)
    if flat.size == 0:
        return {"size": list(m.shape), "counts": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return {"size": [int(s) for s in m.shape], "counts": [int(c) for c in counts]}


def rle_decode(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    counts = rle["counts"]
    if sum(counts) != h * w:
        raise ValidationError(f"run lengths sum to {sum(counts)}, expected {h * w}")
    vals = np.arange(len(counts)) % 2
    return np.repeat(vals, counts).astype(np.uint8).reshape(h, w)


def dumps_results(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def emit_results(doc: dict, path):
    atomic_write(path, dumps_results(doc))


def load_results(path) -> dict:
    with open(path) as f:
        return json.load(f)


def render_overlay(instances, frame: int, shape) -> np.ndarray:
    img = np.full(tuple(shape) + (3,), BACKGROUND, np.float64)
    for inst in instances:
        seg = inst["segmentations"][frame]
        if seg is None:
            continue
        m = rle_decode(seg).astype(bool)
        color = np.array(PALETTE[(inst["id"] - 1) % len(PALETTE)], np.float64)
        img[m] = (1 - OVERLAY_ALPHA) * img[m] + OVERLAY_ALPHA * color
    return np.rint(img).astype(np.uint8)


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, np.uint8).tobytes()


def emit_overlays(doc: dict, out_dir, shape=None, video: int = 0) -> list[str]:
    """Write one P6 image per frame of ``doc['videos'][video]``; returns the paths.

    ``shape`` defaults to the mask size recorded in the document.
    """
    v = doc["videos"][video]
    if shape is None:
        shape = v.get("mask_size")
        if shape is None:
            raise ValidationError("overlay needs a frame shape")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t in range(v["length"]):
        p = os.path.join(out_dir, f"frame_{t:03d}.ppm")
        atomic_write(p, ppm_bytes(render_overlay(v["instances"], t, shape)))
        paths.append(p)
    return paths
