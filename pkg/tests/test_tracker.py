import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calivis.errors import ValidationError
from calivis.geometry import Box
from calivis.maskgen import InstanceMask
from calivis.tracker import (
    Detection,
    MatchConfig,
    TrackStore,
    assign_ids,
    match_score,
    merge_masks,
    resolve_assignment,
)

CFG = MatchConfig(alpha=1.0, beta=1.0, epsilon=0.3)


def square(y, x, size=3, shape=(12, 12)):
    v = np.zeros(shape, np.float32)
    v[y:y + size, x:x + size] = 0.9
    return InstanceMask(v, Box(x + size / 2, y + size / 2, size, size))


def det(mask, emb, category=1, score=0.8):
    emb = np.asarray(emb, np.float32)
    return Detection(mask, emb, mask.crop_box, category, score, coeffs=np.zeros(2, np.float32))


def test_match_score_max():
    m = square(2, 2)
    assert match_score([1, 0], [1, 0], m, m, CFG) == pytest.approx(2.0)


def test_match_score_zero():
    assert match_score([1, 0], [0, 1], square(0, 0), square(6, 6), CFG) == 0.0


def test_match_score_weights():
    m = square(2, 2)
    assert match_score([1, 0], [1, 0], m, m, MatchConfig(0.25, 2.0)) == pytest.approx(2.25)


def test_match_score_zero_embedding():
    with pytest.raises(ValidationError):
        match_score([0, 0], [1, 0], square(0, 0), square(0, 0), CFG)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_match_score_scale_invariant(a, b):
    m1, m2 = square(1, 1), square(2, 2)
    e1, e2 = np.array([0.3, -0.2, 0.9]), np.array([0.1, 0.5, 0.4])
    assert match_score(a * e1, b * e2, m1, m2, CFG) == pytest.approx(match_score(e1, e2, m1, m2, CFG))


def test_default_operating_point():
    assert (MatchConfig().alpha, MatchConfig().beta) == (1.0, 1.0)


def test_resolve_argmax_rule():
    assert resolve_assignment(np.array([[0.9, 0.2]]), [1, 2], 0.3) == [1]


def test_resolve_threshold_rule():
    assert resolve_assignment(np.array([[0.1, 0.2]]), [1, 2], 0.3) == [None]


def test_resolve_threshold_is_strict():
    assert resolve_assignment(np.array([[0.3]]), [1], 0.3) == [None]


def test_resolve_collision_goes_to_stronger_claim():
    s = np.array([[0.8, 0.6], [0.9, 0.1]])
    assert resolve_assignment(s, [1, 2], 0.3) == [2, 1]
    s = np.array([[0.8, 0.2], [0.9, 0.1]])
    assert resolve_assignment(s, [1, 2], 0.3) == [None, 1]


def test_resolve_ties_by_detection_then_track():
    s = np.array([[0.9, 0.9], [0.9, 0.9]])
    assert resolve_assignment(s, [1, 2], 0.3) == [1, 2]


def test_first_frame_ids():
    store = TrackStore()
    dets = [det(square(0, 0), [1, 0]), det(square(5, 5), [0, 1]), det(square(8, 0), [1, 1])]
    assert assign_ids(dets, store, {}, CFG) == [1, 2, 3]
    assert store.next_id == 4


def test_new_id_after_failed_match():
    store = TrackStore()
    assign_ids([det(square(0, 0), [1, 0, 0]), det(square(6, 6), [0, 1, 0])], store, {}, CFG)
    cross = {1: square(0, 0), 2: square(6, 6)}
    ids = assign_ids([det(square(0, 8), [0, 0, 1])], store, cross, CFG, frame=1)
    assert ids == [3]


def test_matching_follows_embeddings_and_masks():
    store = TrackStore()
    assign_ids([det(square(0, 0), [1, 0]), det(square(6, 6), [0, 1])], store, {}, CFG)
    cross = {1: square(0, 1), 2: square(6, 5)}
    ids = assign_ids([det(square(6, 5), [0, 1]), det(square(0, 1), [1, 0])], store, cross, CFG, frame=1)
    assert ids == [2, 1]
    assert store.tracks[1].last_seen == 1 and store.tracks[1].last_mask.crop_box == square(0, 1).crop_box


def test_ids_unique_per_frame():
    store = TrackStore()
    assign_ids([det(square(0, 0), [1, 0])], store, {}, CFG)
    # two near-identical detections both prefer track 1
    ids = assign_ids([det(square(0, 0), [1, 0]), det(square(0, 0), [1, 0])], store, {1: square(0, 0)}, CFG, 1)
    assert sorted(ids) == [1, 2]


def test_assignment_deterministic():
    def run():
        store = TrackStore()
        assign_ids([det(square(0, 0), [1, 0]), det(square(4, 4), [1, 0])], store, {}, CFG)
        return assign_ids(
            [det(square(4, 4), [1, 0]), det(square(0, 0), [1, 0])], store, {1: square(0, 0), 2: square(4, 4)}, CFG, 1
        )

    assert run() == run() == [2, 1]


def test_category_votes():
    store = TrackStore()
    assign_ids([det(square(0, 0), [1, 0], category=2, score=0.6)], store, {}, CFG)
    for t in (1, 2):
        assign_ids([det(square(0, 0), [1, 0], category=1, score=0.5)], store, {1: square(0, 0)}, CFG, t)
    tr = store.tracks[1]
    assert tr.category == 1
    assert tr.score == pytest.approx((0.6 + 0.5 + 0.5) / 3)


def test_merge_full_overlap():
    assert merge_masks({1: "a", 2: "b"}, {1: "x", 2: "y"}) == {1: "a", 2: "b"}


def test_merge_supplements_missing():
    assert merge_masks({1: "a"}, {1: "x", 2: "y"}) == {1: "a", 2: "y"}


def test_merge_empty_frame():
    assert merge_masks({}, {1: "x", 2: "y"}) == {1: "x", 2: "y"}


@given(st.sets(st.integers(1, 20)), st.sets(st.integers(1, 20)))
def test_merge_key_identity(frame_ids, cross_ids):
    merged = merge_masks({i: ("f", i) for i in frame_ids}, {i: ("c", i) for i in cross_ids})
    assert set(merged) == frame_ids | (cross_ids - (cross_ids & frame_ids))
    assert all(merged[i][0] == "f" for i in frame_ids)
