import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calivis.errors import ValidationError
from calivis.geometry import Box, BoxDelta, decode_box
from calivis.maskgen import assemble_mask
from calivis.numerics import ConvKernel
from calivis.temporal import (
    TemporalNet,
    correlate,
    cross_frame_box,
    cross_frame_coeffs,
    cross_frame_mask,
    temporal_forward,
)


def correlate_loop(prev, curr, d):
    """Direct definition, one output at a time."""
    h, w, c = prev.shape
    r = (d - 1) // 2
    out = np.zeros((h, w, d * d))
    for y in range(h):
        for x in range(w):
            for u in range(d):
                for v in range(d):
                    yy, xx = y + u - r, x + v - r
                    if 0 <= yy < h and 0 <= xx < w:
                        out[y, x, u * d + v] = float(prev[y, x].astype(np.float64) @ curr[yy, xx]) / c
    return out


def test_correlate_matches_loop():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 6, 3)).astype(np.float32)
    b = rng.normal(size=(5, 6, 3)).astype(np.float32)
    np.testing.assert_allclose(correlate(a, b, 3), correlate_loop(a, b, 3), atol=1e-5)


def test_correlate_side_one_normalised():
    x = np.ones((4, 4, 2), np.float32)
    out = correlate(x, x, 1)
    assert out.shape == (4, 4, 1) and np.all(out == 1.0)


def test_correlate_zero_prev():
    rng = np.random.default_rng(1)
    out = correlate(np.zeros((4, 5, 3), np.float32), rng.normal(size=(4, 5, 3)).astype(np.float32), 5)
    assert out.shape == (4, 5, 25) and np.all(out == 0)


def test_correlate_errors():
    with pytest.raises(ValidationError):
        correlate(np.zeros((3, 3, 1), np.float32), np.zeros((3, 4, 1), np.float32), 3)
    with pytest.raises(ValidationError):
        correlate(np.zeros((3, 3, 1), np.float32), np.zeros((3, 3, 1), np.float32), 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.integers(0, 2**31 - 1))
def test_correlate_translation_equivariance(sy, sx, seed):
    d, r = 5, 2
    rng = np.random.default_rng(seed)
    prev = rng.normal(size=(9, 10, 4)).astype(np.float32)
    curr = np.zeros_like(prev)
    h, w, _ = prev.shape
    for y in range(h):
        for x in range(w):
            if 0 <= y - sy < h and 0 <= x - sx < w:
                curr[y, x] = prev[y - sy, x - sx]
    vol = correlate(prev, curr, d)
    ref = correlate(prev, prev, d)[..., r * d + r]
    for y in range(h):
        for x in range(w):
            if 0 <= y + sy < h and 0 <= x + sx < w:
                assert vol[y, x, (sy + r) * d + (sx + r)] == ref[y, x]


def test_unit_self_correlation_peaks_at_zero_shift():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(7, 7, 5))
    x = (x / np.linalg.norm(x, axis=2, keepdims=True)).astype(np.float32)
    vol = correlate(x, x, 3)
    assert np.all(np.argmax(vol, axis=2) == 4)


def _net_dims(f=3, d=3, k=4):
    return f, d, k, 2 * f + d * d


def test_zero_net_gives_identity_path():
    f, d, k, _ = _net_dims()
    rng = np.random.default_rng(3)
    prev = rng.normal(size=(6, 6, f)).astype(np.float32)
    curr = rng.normal(size=(6, 6, f)).astype(np.float32)
    net = TemporalNet.build(f, d, k)
    b_prev = Box(10, 12, 6, 4)
    out = temporal_forward(prev, curr, correlate(prev, curr, d), net, b_prev, stride=4)
    assert out.box_delta == BoxDelta(0, 0, 0, 0)
    assert np.all(out.coeff_delta == 0)
    c_prev = rng.normal(size=k)
    assert cross_frame_box(b_prev, out.box_delta) == b_prev
    np.testing.assert_array_equal(cross_frame_coeffs(c_prev, out.coeff_delta), c_prev.astype(np.float32))


def test_pass_through_box_head_reads_delta():
    # no trunk, 1x1 box head copying 4 designated channels of curr
    f, d, k, c_in = _net_dims(f=5)
    w = np.zeros((1, 1, c_in, 4), np.float32)
    for n in range(4):
        w[0, 0, f + n, n] = 1.0  # curr channels 0..3
    net = TemporalNet((), ConvKernel(w, np.zeros(4)), ConvKernel.zeros(1, 1, c_in, k))
    prev = np.zeros((6, 6, f), np.float32)
    curr = np.zeros((6, 6, f), np.float32)
    delta = (0.1, -0.2, 0.3, math.log(0.5))
    curr[..., :4] = delta
    out = temporal_forward(prev, curr, correlate(prev, curr, d), net, Box(9, 13, 4, 4), stride=4)
    assert (out.box_delta.dx, out.box_delta.dy, out.box_delta.dw, out.box_delta.dh) == pytest.approx(delta, abs=1e-6)


def test_readout_samples_box_centre():
    # box head copies one channel of prev that ramps along x; read at the projected centre
    f, d, k, c_in = _net_dims(f=1)
    w = np.zeros((1, 1, c_in, 4), np.float32)
    w[0, 0, 0, 0] = 1.0
    net = TemporalNet((), ConvKernel(w, np.zeros(4)), ConvKernel.zeros(1, 1, c_in, k))
    prev = np.tile(np.arange(8, dtype=np.float32), (8, 1))[..., None]
    curr = np.zeros_like(prev)
    # cx = 14 px with stride 4 -> grid x = 14/4 - 0.5 = 3.0
    out = temporal_forward(prev, curr, correlate(prev, curr, d), net, Box(14, 10, 4, 4), stride=4)
    assert out.box_delta.dx == pytest.approx(3.0)


def test_random_net_outputs_finite():
    f, d, k, _ = _net_dims()
    rng = np.random.default_rng(4)
    net = TemporalNet.build(f, d, k, width=6, rng=rng)
    prev = rng.normal(size=(5, 5, f)).astype(np.float32)
    curr = rng.normal(size=(5, 5, f)).astype(np.float32)
    out = temporal_forward(prev, curr, correlate(prev, curr, d), net, Box(8, 8, 4, 4), stride=4)
    assert np.all(np.isfinite(out.box_delta.as_array())) and out.coeff_delta.shape == (k,) and np.all(np.isfinite(out.coeff_delta))


def test_net_channel_validation():
    with pytest.raises(ValidationError):
        TemporalNet((ConvKernel.zeros(3, 3, 5, 4),), ConvKernel.zeros(1, 1, 3, 4), ConvKernel.zeros(1, 1, 4, 2))
    net = TemporalNet.build(2, 3, 4)
    with pytest.raises(ValidationError):
        net.forward(np.zeros((3, 3, 5), np.float32))


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    net = TemporalNet.build(3, 5, 4, width=7, rng=rng)
    path = tmp_path / "w.sten"
    net.save(path)
    back = TemporalNet.load(path)
    assert back.manifest() == net.manifest()
    assert [n for n, _ in net.manifest()] == [
        "trunk.0.weight", "trunk.0.bias", "trunk.1.weight", "trunk.1.bias",
        "box_head.weight", "box_head.bias", "coeff_head.weight", "coeff_head.bias",
    ]
    for (a, b) in zip(net.tensors().values(), back.tensors().values()):
        assert a.tobytes() == b.tobytes()


def test_weights_missing_entry():
    with pytest.raises(ValidationError):
        TemporalNet.from_tensors({"box_head.weight": np.zeros((1, 1, 2, 4))})


def test_cross_frame_box_example():
    b = cross_frame_box(Box(10, 10, 4, 8), BoxDelta(0.5, -0.25, math.log(2), 0))
    assert b.as_array() == pytest.approx([12, 8, 8, 8])


@given(
    st.builds(Box, st.floats(-50, 50), st.floats(-50, 50), st.floats(0.5, 40), st.floats(0.5, 40)),
    st.builds(BoxDelta, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
)
def test_cross_frame_box_is_decode(b, d):
    assert cross_frame_box(b, d) == decode_box(b, d)


def test_cross_frame_coeffs():
    np.testing.assert_allclose(cross_frame_coeffs([0.2, -0.5], [0.1, 0.5]), [0.3, 0.0], atol=1e-7)
    with pytest.raises(ValidationError):
        cross_frame_coeffs([1, 2], [1])


def test_cross_frame_coeffs_permutation():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=5), rng.normal(size=5)
    perm = rng.permutation(5)
    np.testing.assert_array_equal(cross_frame_coeffs(a[perm], b[perm]), cross_frame_coeffs(a, b)[perm])


def test_cross_frame_mask_delegates():
    rng = np.random.default_rng(7)
    p = rng.normal(size=(8, 8, 3)).astype(np.float32)
    c = rng.normal(size=3).astype(np.float32)
    b = Box(4, 3, 5, 4)
    np.testing.assert_array_equal(cross_frame_mask(p, c, b).values, assemble_mask(p, c, b).values)
    half = cross_frame_mask(p, np.zeros(3), b).values
    assert set(np.unique(half)) == {0.0, 0.5}


def test_zero_net_cross_mask_reproduces_previous_mask():
    rng = np.random.default_rng(8)
    p = rng.normal(size=(8, 8, 3)).astype(np.float32)
    c = rng.normal(size=3).astype(np.float32)
    b = Box(4, 4, 4, 6)
    prev_mask = assemble_mask(p, c, b)
    c_cross = cross_frame_coeffs(c, np.zeros(3))
    np.testing.assert_array_equal(cross_frame_mask(p, c_cross, cross_frame_box(b, BoxDelta(0, 0, 0, 0))).values,
                                  prev_mask.values)
