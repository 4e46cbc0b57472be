"""Frame decoding and the per-video tracking loop.

Per-anchor head tensors are anchor-major along the channel axis: anchor
``a`` of the class-score tensor occupies channels ``a*n_cls .. (a+1)*n_cls``,
and likewise for deltas (4), coefficients (k_proto) and embeddings (e_dim).
Boxes are in image pixels; the image spans ``grid * stride`` pixels and the
prototypes cover the same extent at their own resolution.
"""
from __future__ import annotations

import glob
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensorio
from .calibration import fcb_head
from .config import PipelineConfig
from .errors import ValidationError
from .geometry import AnchorSet, Box, decode_boxes, generate_anchors, nms_arrays
from .maskgen import InstanceMask, assemble_mask, binarize
from .numerics import ConvKernel, as_tensor3
from .results import rle_encode
from .temporal import (
    TemporalNet,
    correlate,
    cross_frame_box,
    cross_frame_coeffs,
    cross_frame_mask,
    read_instance,
    temporal_maps,
)
from .tracker import Detection, TrackStore, assign_ids, merge_masks

FRAME_KEYS = ("scores", "deltas", "coeffs", "embeds", "protos", "features")


@dataclass
class FrameInputs:
    scores: np.ndarray  # (H, W, A * n_cls)
    deltas: np.ndarray  # (H, W, A * 4)
    coeffs: np.ndarray  # (H, W, A * k_proto)
    embeds: np.ndarray  # (H, W, A * e_dim)
    protos: np.ndarray  # (H', W', k_proto)
    features: np.ndarray  # (H, W, f) fusion features
    head_features: np.ndarray | None = None  # (H, W, f_h), only for FCB modes

    def __post_init__(self):
        for key in FRAME_KEYS:
            setattr(self, key, as_tensor3(getattr(self, key), key))
        if self.head_features is not None:
            self.head_features = as_tensor3(self.head_features, "head_features")

    @property
    def grid_shape(self):
        return self.scores.shape[:2]

    def signature(self):
        return tuple(getattr(self, k).shape for k in FRAME_KEYS)

    def tensors(self) -> dict:
        out = {k: getattr(self, k) for k in FRAME_KEYS}
        if self.head_features is not None:
            out["head_features"] = self.head_features
        return out

    @classmethod
    def from_tensors(cls, tensors: dict) -> "FrameInputs":
        missing = [k for k in FRAME_KEYS if k not in tensors]
        if missing:
            raise ValidationError(f"frame file missing tensors {missing}")
        return cls(**{k: tensors[k] for k in FRAME_KEYS}, head_features=tensors.get("head_features"))


@dataclass
class FrameLayout:
    """Shape bookkeeping shared by every frame of a video."""

    grid_h: int
    grid_w: int
    n_anchors: int
    n_cls: int
    k_proto: int
    e_dim: int

    @classmethod
    def infer(cls, fr: FrameInputs, cfg: PipelineConfig) -> "FrameLayout":
        h, w = fr.grid_shape
        a = len(cfg.anchor_aspects)
        for name, t in (("deltas", fr.deltas), ("coeffs", fr.coeffs), ("embeds", fr.embeds), ("features", fr.features)):
            if t.shape[:2] != (h, w):
                raise ValidationError(f"{name} grid {t.shape[:2]} != score grid {(h, w)}")
        if fr.scores.shape[2] % a:
            raise ValidationError(f"score channels {fr.scores.shape[2]} not divisible by {a} anchors")
        if fr.deltas.shape[2] != 4 * a:
            raise ValidationError(f"delta channels {fr.deltas.shape[2]} != 4 x {a} anchors")
        if fr.coeffs.shape[2] != cfg.k_proto * a or fr.protos.shape[2] != cfg.k_proto:
            raise ValidationError(f"coefficient/prototype channels inconsistent with k_proto={cfg.k_proto}")
        if fr.embeds.shape[2] != cfg.e_dim * a:
            raise ValidationError(f"embedding channels {fr.embeds.shape[2]} != e_dim x anchors")
        return cls(h, w, a, fr.scores.shape[2] // a, cfg.k_proto, cfg.e_dim)

    def image_size(self, stride):
        return self.grid_h * stride, self.grid_w * stride


@dataclass
class HeadWeights:
    """Optional per-anchor head kernels used when ``fcb_mode`` is not ``none``.

    Kernel ``a`` maps ``head_features`` to ``n_cls + k_proto + e_dim`` channels
    (scores, coefficients, embeddings). Adaptive mode adds a 1x1 offset head
    per anchor.
    """

    kernels: list
    offset_heads: list | None = None

    @classmethod
    def from_tensors(cls, tensors: dict):
        kernels, offsets = [], []
        while f"fcb.{len(kernels)}.weight" in tensors:
            a = len(kernels)
            kernels.append(ConvKernel(tensors[f"fcb.{a}.weight"], tensors[f"fcb.{a}.bias"]))
            if f"fcb.{a}.offset.weight" in tensors:
                offsets.append(ConvKernel(tensors[f"fcb.{a}.offset.weight"], tensors[f"fcb.{a}.offset.bias"]))
        if not kernels:
            return None
        return cls(kernels, offsets or None)

    def tensors(self) -> dict:
        out = {}
        for a, k in enumerate(self.kernels):
            out[f"fcb.{a}.weight"] = k.weights
            out[f"fcb.{a}.bias"] = k.bias
            if self.offset_heads:
                out[f"fcb.{a}.offset.weight"] = self.offset_heads[a].weights
                out[f"fcb.{a}.offset.bias"] = self.offset_heads[a].bias
        return out


def calibrated_heads(fr: FrameInputs, layout: FrameLayout, cfg: PipelineConfig, heads: HeadWeights):
    """Recompute scores, coefficients and embeddings from box-calibrated features."""
    if fr.head_features is None:
        raise ValidationError(f"fcb_mode={cfg.fcb_mode!r} needs head_features in every frame")
    a = layout.n_anchors
    deltas = fr.deltas.reshape(layout.grid_h, layout.grid_w, a, 4)
    outs = fcb_head(
        fr.head_features, heads.kernels, [deltas[:, :, i] for i in range(a)], cfg.fcb_mode, heads.offset_heads
    )
    n, k = layout.n_cls, layout.k_proto
    scores = np.concatenate([o[..., :n] for o in outs], axis=2)
    coeffs = np.concatenate([o[..., n:n + k] for o in outs], axis=2)
    embeds = np.concatenate([o[..., n + k:] for o in outs], axis=2)
    return scores, coeffs, embeds


def decode_frame(fr: FrameInputs, anchors: AnchorSet, cfg: PipelineConfig, heads: HeadWeights | None = None):
    """Detections for one frame, in descending score order."""
    layout = FrameLayout.infer(fr, cfg)
    if anchors.grid_shape != (layout.grid_h, layout.grid_w) or anchors.num_anchors != layout.n_anchors:
        raise ValidationError("anchor set does not match the frame grid")
    scores, coeffs, embeds = fr.scores, fr.coeffs, fr.embeds
    if cfg.fcb_mode != "none":
        if heads is None:
            raise ValidationError(f"fcb_mode={cfg.fcb_mode!r} needs head weights")
        scores, coeffs, embeds = calibrated_heads(fr, layout, cfg, heads)

    n_total = layout.grid_h * layout.grid_w * layout.n_anchors
    cls_scores = scores.reshape(n_total, layout.n_cls)
    best_cls = np.argmax(cls_scores, axis=1)
    best = cls_scores[np.arange(n_total), best_cls].astype(np.float64)
    cand = np.flatnonzero(best >= cfg.score_threshold)
    if cand.size == 0:
        return []
    boxes = decode_boxes(anchors.boxes.reshape(n_total, 4)[cand], fr.deltas.reshape(n_total, 4)[cand])
    keep = nms_arrays(boxes, best[cand], cfg.nms_iou, cfg.top_k)

    img_h, img_w = layout.image_size(cfg.stride)
    ph, pw = fr.protos.shape[:2]
    coeffs = coeffs.reshape(n_total, layout.k_proto)
    embeds = embeds.reshape(n_total, layout.e_dim)
    dets = []
    for k in keep:
        idx = cand[k]
        box = Box(*boxes[k])
        c = coeffs[idx].copy()
        mask = assemble_mask(fr.protos, c, box.scaled(pw / img_w, ph / img_h))
        dets.append(
            Detection(
                mask=mask,
                embedding=embeds[idx].copy(),
                box=box,
                category=int(best_cls[idx]) + 1,
                score=float(best[idx]),
                coeffs=c,
                class_scores=cls_scores[idx].copy(),
            )
        )
    return dets


@dataclass
class FrameEntry:
    box: Box
    mask: InstanceMask
    coeffs: np.ndarray
    source: str  # "frame" or "cross"


@dataclass
class VideoResult:
    frames: list  # per frame: {track id: FrameEntry}
    store: TrackStore
    mask_size: tuple
    binarize_threshold: float = 0.5
    detections: list = field(default_factory=list)

    def ids_at(self, t: int) -> list:
        return sorted(self.frames[t])

    def to_entry(self, video_id: int = 1) -> dict:
        instances = []
        for tid in sorted(self.store.tracks):
            tr = self.store.tracks[tid]
            segs, boxes, sources = [], [], []
            for fr in self.frames:
                e = fr.get(tid)
                if e is None:
                    segs.append(None)
                    boxes.append(None)
                    sources.append(None)
                else:
                    segs.append(rle_encode(binarize(e.mask, self.binarize_threshold)))
                    boxes.append([e.box.cx, e.box.cy, e.box.w, e.box.h])
                    sources.append(e.source)
            instances.append(
                {
                    "id": tid,
                    "category_id": tr.category,
                    "score": tr.score,
                    "segmentations": segs,
                    "boxes": boxes,
                    "sources": sources,
                }
            )
        return {
            "video_id": video_id,
            "length": len(self.frames),
            "mask_size": list(self.mask_size),
            "instances": instances,
        }


def results_document(videos) -> dict:
    return {"videos": [v.to_entry(n + 1) for n, v in enumerate(videos)]}


def run_video(frames, net: TemporalNet | None, cfg: PipelineConfig, heads: HeadWeights | None = None) -> VideoResult:
    """Frame-level detection, cross-frame propagation, id assignment and supplementation.

    A track is propagated from t-1 to t if it is in the merged output at t-1.
    A propagated mask is supplemented at t only if the track had a frame-level
    detection at t-1, so a missed object survives one frame on propagation.
    """
    frames = list(frames)
    if not frames:
        raise ValidationError("a video needs at least one frame")
    layout = FrameLayout.infer(frames[0], cfg)
    sig = frames[0].signature()
    for t, fr in enumerate(frames):
        if fr.signature() != sig:
            raise ValidationError(f"frame {t} tensor shapes differ from frame 0")
    feat_c = frames[0].features.shape[2]
    if net is None:
        net = TemporalNet.build(feat_c, cfg.corr_side, cfg.k_proto)
    if net.in_channels != 2 * feat_c + cfg.corr_side**2 or net.k_proto != cfg.k_proto:
        raise ValidationError("temporal network does not match feature/correlation/prototype channels")

    anchors = generate_anchors(layout.grid_h, layout.grid_w, cfg.stride, cfg.anchor_scale, cfg.anchor_aspects)
    img_h, img_w = layout.image_size(cfg.stride)
    ph, pw = frames[0].protos.shape[:2]
    sx, sy = pw / img_w, ph / img_h
    store = TrackStore()
    out_frames = []
    all_dets = []
    live = {}  # track id -> FrameEntry at t-1
    prev = None
    for t, fr in enumerate(frames):
        dets = decode_frame(fr, anchors, cfg, heads)
        all_dets.append(dets)
        cross = {}
        if prev is not None and live:
            corr = correlate(prev.features, fr.features, cfg.corr_side)
            box_map, coeff_map = temporal_maps(prev.features, fr.features, corr, net)
            for tid, e in live.items():
                delta = read_instance(box_map, coeff_map, e.box, cfg.stride)
                b = cross_frame_box(e.box, delta.box_delta)
                c = cross_frame_coeffs(e.coeffs, delta.coeff_delta)
                cross[tid] = FrameEntry(b, cross_frame_mask(fr.protos, c, b.scaled(sx, sy)), c, "cross")

        ids = assign_ids(dets, store, {tid: e.mask for tid, e in cross.items()}, cfg.match, frame=t)
        frame_entries = {tid: FrameEntry(d.box, d.mask, d.coeffs, "frame") for tid, d in zip(ids, dets)}
        eligible = {tid: e for tid, e in cross.items() if store.tracks[tid].last_seen == t - 1}
        merged_masks = merge_masks(
            {tid: e.mask for tid, e in frame_entries.items()}, {tid: e.mask for tid, e in eligible.items()}, store
        )
        merged = {tid: frame_entries.get(tid) or eligible[tid] for tid in merged_masks}
        out_frames.append(merged)
        live = merged
        prev = fr
    return VideoResult(out_frames, store, (ph, pw), cfg.binarize_threshold, all_dets)


def frame_paths(source) -> list[str]:
    """Frame files from a directory (``frame_*.sten``, sorted) or an explicit list."""
    if isinstance(source, (str, os.PathLike)) and os.path.isdir(source):
        paths = sorted(glob.glob(os.path.join(os.fspath(source), "frame_*.sten")))
        if not paths:
            raise ValidationError(f"no frame_*.sten files in {source}")
        return paths
    if isinstance(source, (str, os.PathLike)):
        return [os.fspath(source)]
    return [os.fspath(p) for p in source]


def load_frames(source) -> list[FrameInputs]:
    return [FrameInputs.from_tensors(tensorio.load_tensor_file(p)) for p in frame_paths(source)]


def load_weights(path, feat_channels: int, cfg: PipelineConfig):
    """TemporalNet (zero net when ``path`` is None) and optional FCB head weights."""
    if path is None:
        return TemporalNet.build(feat_channels, cfg.corr_side, cfg.k_proto), None
    tensors = tensorio.load_tensor_file(path)
    if "box_head.weight" in tensors:
        net = TemporalNet.from_tensors(tensors)
    else:
        net = TemporalNet.build(feat_channels, cfg.corr_side, cfg.k_proto)
    return net, HeadWeights.from_tensors(tensors)

