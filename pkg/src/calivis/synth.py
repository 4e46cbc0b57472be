"""Moving-rectangle scenes with head tensors that decode back to the exact boxes.

A scene description is a dict (or JSON file)::

    {"grid": [8, 8], "proto_size": [32, 32], "num_classes": 3,
     "num_frames": 10, "feat_channels": 8,
     "objects": [{"category": 1, "box": [cx, cy, w, h],
                  "velocity": [vx, vy], "hidden": [frame, ...]}]}

Boxes are image pixels (image = grid * stride). Each visible object lights
one anchor whose deltas encode its box; object ``o`` owns prototype channel
``o`` (+1 inside the rectangle, -1 outside), coefficient ``COEFF_GAIN * e_o``
and the one-hot embedding ``e_o``. Hidden frames drop the object from the
heads only; it stays in the prototypes and features.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .geometry import Box, encode_box, generate_anchors
from .pipeline import FrameInputs

COEFF_GAIN = 8.0
HOT_SCORE = 0.9
NOISE_SCORE = 0.01  # background scores stay below the default 0.05 threshold

DEFAULT_SCENE = {
    "grid": [8, 8],
    "proto_size": [32, 32],
    "num_classes": 3,
    "num_frames": 10,
    "feat_channels": 8,
    "objects": [
        {"category": 1, "box": [6.0, 10.0, 8.0, 8.0], "velocity": [2.0, 0.0]},
        {"category": 2, "box": [26.0, 16.0, 8.0, 8.0], "velocity": [-2.0, 0.0], "hidden": [4]},
    ],
}


@dataclass
class GroundTruthTrack:
    id: int
    category: int
    boxes: list  # per frame Box
    visible: list  # per frame bool: present in the detector heads


def load_scene(path) -> dict:
    with open(path) as f:
        return json.load(f)


def object_box(obj: dict, t: int) -> Box:
    cx, cy, w, h = obj["box"]
    vx, vy = obj.get("velocity", (0.0, 0.0))
    return Box(cx + vx * t, cy + vy * t, w, h)


def _pick_anchor(anchors, box: Box, taken: set):
    """Nearest free anchor to the box centre, best-matching aspect first."""
    gh, gw = anchors.grid_shape
    s = anchors.stride
    i0 = min(max(int(box.cy // s), 0), gh - 1)
    j0 = min(max(int(box.cx // s), 0), gw - 1)
    ratio = box.w / box.h
    by_aspect = sorted(range(anchors.num_anchors), key=lambda a: (abs(math.log(anchors.aspect_ratios[a] / ratio)), a))
    cells = sorted(
        ((i, j) for i in range(gh) for j in range(gw)),
        key=lambda ij: ((ij[0] - i0) ** 2 + (ij[1] - j0) ** 2, ij),
    )
    for i, j in cells:
        for a in by_aspect:
            if (i, j, a) not in taken:
                return i, j, a
    raise ValidationError("no free anchor left for synthetic object")


def _indicator(box: Box, shape) -> np.ndarray:
    h, w = shape
    x1, y1, x2, y2 = box.corners()
    xc = np.arange(w) + 0.5
    yc = np.arange(h) + 0.5
    return ((yc >= y1) & (yc < y2))[:, None] & ((xc >= x1) & (xc < x2))[None, :]


def synth_scene(cfg: PipelineConfig, scene: dict | None = None, seed: int | None = None):
    """Return ``(frames, ground_truth)`` for a scene description."""
    scene = DEFAULT_SCENE if scene is None else scene
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    gh, gw = scene["grid"]
    ph, pw = scene["proto_size"]
    n_cls = int(scene["num_classes"])
    n_frames = int(scene["num_frames"])
    f_c = int(scene.get("feat_channels", 8))
    objects = scene["objects"]
    if len(objects) > cfg.k_proto:
        raise ValidationError(f"{len(objects)} objects but only {cfg.k_proto} prototype channels")
    if len(objects) > cfg.e_dim:
        raise ValidationError(f"{len(objects)} objects but embedding length {cfg.e_dim}")
    img_h, img_w = gh * cfg.stride, gw * cfg.stride
    anchors = generate_anchors(gh, gw, cfg.stride, cfg.anchor_scale, cfg.anchor_aspects)
    n_a = anchors.num_anchors
    for o, obj in enumerate(objects):
        if not 1 <= obj["category"] <= n_cls:
            raise ValidationError(f"object {o}: category outside 1..{n_cls}")
        for t in range(n_frames):
            x1, y1, x2, y2 = object_box(obj, t).corners()
            if x1 < 0 or y1 < 0 or x2 > img_w or y2 > img_h:
                raise ValidationError(f"object {o} leaves the {img_w}x{img_h} canvas at frame {t}")
    patterns = rng.normal(0.0, 1.0, size=(len(objects), f_c))

    frames = []
    gt = [
        GroundTruthTrack(o + 1, obj["category"], [], [])
        for o, obj in enumerate(objects)
    ]
    for t in range(n_frames):
        scores = rng.uniform(0.0, NOISE_SCORE, size=(gh, gw, n_a, n_cls))
        deltas = np.zeros((gh, gw, n_a, 4))
        coeffs = np.zeros((gh, gw, n_a, cfg.k_proto))
        embeds = np.zeros((gh, gw, n_a, cfg.e_dim))
        protos = -np.ones((ph, pw, cfg.k_proto))
        features = rng.normal(0.0, 0.1, size=(gh, gw, f_c))
        taken = set()
        for o, obj in enumerate(objects):
            box = object_box(obj, t)
            visible = t not in obj.get("hidden", ())
            gt[o].boxes.append(box)
            gt[o].visible.append(visible)
            protos[..., o] = np.where(_indicator(box.scaled(pw / img_w, ph / img_h), (ph, pw)), 1.0, -1.0)
            cell_box = box.scaled(1 / cfg.stride, 1 / cfg.stride)
            features[_indicator(cell_box, (gh, gw))] += patterns[o]
            if not visible:
                continue
            i, j, a = _pick_anchor(anchors, box, taken)
            taken.add((i, j, a))
            d = encode_box(anchors.box(i, j, a), box)
            scores[i, j, a] = 0.0
            scores[i, j, a, obj["category"] - 1] = HOT_SCORE
            deltas[i, j, a] = (d.dx, d.dy, d.dw, d.dh)
            coeffs[i, j, a, o] = COEFF_GAIN
            embeds[i, j, a, o] = 1.0
        frames.append(
            FrameInputs(
                scores=scores.reshape(gh, gw, -1),
                deltas=deltas.reshape(gh, gw, -1),
                coeffs=coeffs.reshape(gh, gw, -1),
                embeds=embeds.reshape(gh, gw, -1),
                protos=protos,
                features=features,
            )
        )
    return frames, gt


def ground_truth_document(gt) -> dict:
    return {
        "tracks": [
            {
                "id": g.id,
                "category_id": g.category,
                "boxes": [[b.cx, b.cy, b.w, b.h] for b in g.boxes],
                "visible": list(g.visible),
            }
            for g in gt
        ]
    }
