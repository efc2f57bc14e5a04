"""Sampling offsets that spread a 3 x 3 grid over a coarse box.

Run: python3 demos/05_tfam.py
"""

import numpy as np

from mostdet.geometry import decode_rbox
from mostdet.sampling import SamplingGrid, sampled_points, tfam_offsets

grid = SamplingGrid(3)
p0 = np.array([20.0, 12.0])
np.set_printoptions(precision=2, suppress=True)

# A box exactly one feature pixel around p0 needs no offsets at all.
print("grid-sized box offsets all zero:", not tfam_offsets((4, 4, 4, 4, 0.0), p0, grid, 4).any())

# A long rotated box: the grid stretches to its corners.
coarse = (6.0, 40.0, 6.0, 12.0, 0.3)
offsets = tfam_offsets(coarse, p0, grid, 4)
points = sampled_points(p0, grid, offsets)
print("box corners (feature units):")
print(decode_rbox(p0, coarse, 4) / 4)
print("sampling points:")
print(points.reshape(3, 3, 2))
