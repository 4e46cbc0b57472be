"""Video-level identities: match scores, greedy one-to-one ID assignment, supplementation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import Box
from .maskgen import InstanceMask, binarize, mask_iou


@dataclass(frozen=True)
class MatchConfig:
    alpha: float = 1.0
    beta: float = 1.0
    epsilon: float = 0.3
    binarize_threshold: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("alpha and beta must be non-negative")
        if not np.isfinite(self.epsilon):
            raise ValidationError("epsilon must be finite")


@dataclass
class Detection:
    mask: InstanceMask
    embedding: np.ndarray
    box: Box
    category: int
    score: float
    coeffs: np.ndarray | None = None
    class_scores: np.ndarray | None = None


@dataclass
class Track:
    id: int
    last_embedding: np.ndarray
    last_coeffs: np.ndarray
    last_box: Box
    last_mask: InstanceMask
    last_seen: int
    votes: dict = field(default_factory=dict)  # category -> summed score
    n_votes: int = 0
    score_sum: float = 0.0

    def record(self, det: Detection):
        self.votes[det.category] = self.votes.get(det.category, 0.0) + det.score
        self.n_votes += 1
        self.score_sum += det.score

    @property
    def category(self) -> int:
        # highest mean vote; lowest category id on ties
        return min(self.votes, key=lambda c: (-self.votes[c], c)) if self.votes else 0

    @property
    def score(self) -> float:
        return self.score_sum / self.n_votes if self.n_votes else 0.0


@dataclass
class TrackStore:
    tracks: dict = field(default_factory=dict)
    next_id: int = 1

    def new_track(self, det: Detection, frame: int) -> Track:
        tr = Track(self.next_id, det.embedding, det.coeffs, det.box, det.mask, frame)
        tr.record(det)
        self.tracks[tr.id] = tr
        self.next_id += 1
        return tr

    def update(self, track_id: int, det: Detection, frame: int):
        tr = self.tracks[track_id]
        tr.last_embedding = det.embedding
        tr.last_coeffs = det.coeffs
        tr.last_box = det.box
        tr.last_mask = det.mask
        tr.last_seen = frame
        tr.record(det)


def cosine(a, b) -> float:
    a = np.asarray(a, np.float64).reshape(-1)
    b = np.asarray(b, np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"embedding lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("cosine similarity of a zero-norm embedding")
    return float(a @ b / (na * nb))


def match_score(e_det, e_track, m_det, m_cross, cfg: MatchConfig) -> float:
    """alpha * cos(E_det, E_track) + beta * IoU of the binarised masks."""
    t = cfg.binarize_threshold
    return cfg.alpha * cosine(e_det, e_track) + cfg.beta * mask_iou(binarize(m_det, t), binarize(m_cross, t))


def score_matrix(detections, store: TrackStore, cross_masks: dict, cfg: MatchConfig):
    ids = sorted(cross_masks)
    s = np.empty((len(detections), len(ids)), np.float64)
    for i, det in enumerate(detections):
        for j, tid in enumerate(ids):
            s[i, j] = match_score(det.embedding, store.tracks[tid].last_embedding, det.mask, cross_masks[tid], cfg)
    return ids, s


def resolve_assignment(scores: np.ndarray, track_ids, epsilon: float) -> list:
    """Pick a track id (or None for "new") per detection row of ``scores``.

    Detections claim ids in order of their best score (lower index first on
    ties); a detection whose best id is already taken falls back to its best
    free id still above epsilon. Equal scores prefer the lower track id.
    """
    if not len(track_ids):
        return [None] * len(scores)
    scores = np.asarray(scores, np.float64).reshape(-1, len(track_ids))
    n = scores.shape[0]
    out = [None] * n
    best = scores.max(axis=1)
    order = sorted(range(n), key=lambda i: (-best[i], i))
    taken = set()
    for i in order:
        for j in np.argsort(-scores[i], kind="stable"):
            if scores[i, j] <= epsilon:
                break
            if track_ids[j] not in taken:
                taken.add(track_ids[j])
                out[i] = track_ids[j]
                break
    return out


def assign_ids(detections, store: TrackStore, cross_masks: dict, cfg: MatchConfig, frame: int = 0) -> list[int]:
    """Match detections against the tracks in ``cross_masks``; unmatched ones get fresh ids.

    Fresh ids are handed out in detection order. Matched and new tracks are
    updated in ``store``.
    """
    ids, s = score_matrix(detections, store, cross_masks, cfg)
    picks = resolve_assignment(s, ids, cfg.epsilon)
    out = []
    for det, tid in zip(detections, picks):
        if tid is None:
            tid = store.new_track(det, frame).id
        else:
            store.update(tid, det, frame)
        out.append(tid)
    return out


def merge_masks(frame_masks: dict, cross_masks: dict, store: TrackStore | None = None) -> dict:
    """Frame-level masks plus cross-frame masks for ids missing from the frame."""
    merged = dict(frame_masks)
    for tid, m in cross_masks.items():
        if tid not in merged and (store is None or tid in store.tracks):
            merged[tid] = m
    return dict(sorted(merged.items()))
