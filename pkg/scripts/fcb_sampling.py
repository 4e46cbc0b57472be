#!/usr/bin/env python3
"""Compare where each box-calibration mode samples for a few regressed boxes.

Prints, per kernel shape, the tap positions of the aligned offsets next to the
RoIAlign bin centres of the same box, and the response of an aligned versus a
plain convolution on a feature map holding one bright rectangle.
"""
import numpy as np

from calivis.calibration import KernelGrid, aligned_offset_field, aligned_offsets, deformable_conv, roialign_center_oracle
from calivis.geometry import Box, BoxDelta, decode_box
from calivis.numerics import ConvKernel, conv2d

DELTAS = [BoxDelta(0.0, 0.0, 0.0, 0.0), BoxDelta(0.3, -0.2, 0.4, 0.0), BoxDelta(0.0, 0.0, -0.5, 0.7)]


def main():
    np.set_printoptions(precision=3, suppress=True)
    for k_h, k_w in ((3, 3), (3, 5), (5, 3)):
        grid = KernelGrid(k_h, k_w)
        anchor = Box(0.0, 0.0, float(k_w), float(k_h))
        for d in DELTAS:
            taps = grid.point_array() + aligned_offsets(d, grid)
            ref = roialign_center_oracle(decode_box(anchor, d), grid)
            err = np.abs(taps - ref).max()
            print(f"{k_h}x{k_w} delta=({d.dx:+.1f},{d.dy:+.1f},{d.dw:+.1f},{d.dh:+.1f}) max |tap - bin centre| = {err:.1e}")

    # a 3x3 box filter on a map with one 6x6 bright square; the regressed box doubles the anchor
    feat = np.zeros((24, 24, 1), np.float32)
    feat[9:15, 9:15] = 1.0
    k = ConvKernel(np.full((3, 3, 1, 1), 1 / 9, np.float32), np.zeros(1, np.float32))
    grid = KernelGrid(3, 3)
    field = np.zeros((24, 24, 4), np.float32)
    field[..., 2:] = np.log(2.0)
    plain = conv2d(feat, k)[..., 0]
    aligned = deformable_conv(feat, k, aligned_offset_field(field, grid))[..., 0]
    print("\nrow 12 of plain 3x3 response:  ", plain[12, 4:20])
    print("row 12 of aligned (2x box):      ", aligned[12, 4:20])


if __name__ == "__main__":
    main()
