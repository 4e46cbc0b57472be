import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calivis.checks import loop_mask_oracle
from calivis.errors import ValidationError
from calivis.geometry import Box
from calivis.maskgen import assemble_mask, binarize, crop, mask_iou

SIG2 = 0.8807970779778823  # 1 / (1 + e^-2)

FULL = Box(1.0, 1.0, 2.0, 2.0)  # covers a 2x2 map
LEFT = Box(0.5, 1.0, 1.0, 2.0)


@pytest.fixture
def checker():
    p = np.zeros((2, 2, 2), np.float32)
    p[..., 0] = [[1, 0], [0, 1]]
    p[..., 1] = [[0, 1], [1, 0]]
    return p


def test_zero_coeffs_half_everywhere():
    m = assemble_mask(np.ones((3, 4, 5), np.float32), np.zeros(5), Box(2, 1.5, 4, 3))
    assert np.all(m.values == 0.5)


def test_checkerboard_mask(checker):
    m = assemble_mask(checker, [2, -2], FULL)
    expected = np.array([[SIG2, 1 - SIG2], [1 - SIG2, SIG2]])
    np.testing.assert_allclose(m.values, expected, atol=1e-6)
    np.testing.assert_allclose(m.values, loop_mask_oracle(checker, [2, -2], FULL), atol=1e-6)


def test_checkerboard_left_column(checker):
    m = assemble_mask(checker, [2, -2], LEFT)
    assert np.all(m.values[:, 1] == 0)
    np.testing.assert_allclose(m.values[:, 0], [SIG2, 1 - SIG2], atol=1e-6)


def test_length_mismatch(checker):
    with pytest.raises(ValidationError):
        assemble_mask(checker, [1, 2, 3], FULL)


def test_crop_full_and_disjoint():
    v = np.random.default_rng(0).random((4, 6))
    np.testing.assert_array_equal(crop(v, Box(3, 2, 6, 4)), v)
    assert np.all(crop(v, Box(100, 100, 2, 2)) == 0)


def test_crop_left_half():
    v = np.ones((4, 6))
    out = crop(v, Box(1.5, 2, 3, 4))
    assert np.all(out[:, :3] == 1) and np.all(out[:, 3:] == 0)


def test_crop_half_open_edge():
    # box spans x in [0.5, 2.5): centre 0.5 is in, centre 2.5 is out
    out = crop(np.ones((1, 4)), Box(1.5, 0.5, 2.0, 1.0))
    np.testing.assert_array_equal(out, [[1, 1, 0, 0]])


box_st = st.builds(Box, st.floats(-5, 15), st.floats(-5, 15), st.floats(0.1, 20), st.floats(0.1, 20))


@given(arrays(np.float64, (5, 7), elements=st.floats(0, 1)), box_st)
def test_crop_idempotent(v, b):
    once = crop(v, b)
    np.testing.assert_array_equal(crop(once, b), once)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), box_st)
def test_matmul_equals_loop(seed, b):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(6, 5, 4)).astype(np.float32)
    c = rng.normal(size=4).astype(np.float32)
    m = assemble_mask(p, c, b)
    np.testing.assert_allclose(m.values, loop_mask_oracle(p, c, b), atol=1e-6)
    assert np.all((m.values >= 0) & (m.values <= 1))


def test_binarize_threshold_convention(checker):
    half = np.full((2, 2), 0.5)
    assert np.all(binarize(half, 0.5) == 1)
    assert np.all(binarize(half, 0.6) == 0)
    m = assemble_mask(checker, [2, -2], FULL)
    np.testing.assert_array_equal(binarize(m, 0.5), [[1, 0], [0, 1]])


def test_mask_iou_examples():
    a = np.array([[1, 1], [0, 0]])
    assert mask_iou(a, a) == 1.0
    assert mask_iou(a, np.array([[1, 0], [1, 0]])) == pytest.approx(1 / 3)
    assert mask_iou(a, 1 - a) == 0.0
    assert mask_iou(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0


def test_mask_iou_shape_mismatch():
    with pytest.raises(ValidationError):
        mask_iou(np.zeros((2, 2)), np.zeros((2, 3)))


masks = arrays(np.uint8, (4, 5), elements=st.integers(0, 1))


@given(masks, masks)
def test_mask_iou_symmetric(a, b):
    assert mask_iou(a, b) == mask_iou(b, a)


@given(masks, masks, st.integers(0, 19))
def test_mask_iou_grows_with_shared_pixel(a, b, k):
    # turning on a pixel in both masks cannot lower IoU
    a2, b2 = a.copy(), b.copy()
    a2.flat[k] = 1
    b2.flat[k] = 1
    assert mask_iou(a2, b2) >= mask_iou(a, b) - 1e-12
