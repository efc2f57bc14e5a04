"""Quads, rotated rectangles and the RBOX decode.

Run: python3 demos/01_geometry.py
"""

import math

import numpy as np

from mostdet.geometry import (RotatedRect, decode_rbox, min_area_rect, polygon_clip, quad_area, quad_iou,
                              signed_area)

# Image coordinates: y points down, so TL, TR, BR, BL is clockwise on screen.
square = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], dtype=float) - 1
diamond = RotatedRect(0, 0, 2, 2, math.pi / 4).to_quad()

octagon = polygon_clip(square, diamond)
print(f"square & diamond -> {len(octagon)}-gon of area {abs(signed_area(octagon)):.4f}")
print(f"IoU(square, diamond) = {quad_iou(square, diamond):.4f}")

# A rectangle given at any angle folds into [-pi/4, pi/4).
r = RotatedRect(50, 40, 10, 30, math.radians(80))
print(f"folded: w={r.width:.1f} h={r.height:.1f} theta={math.degrees(r.theta):.1f} deg")

# Minimum-area rectangle of a skewed quad.
skew = np.array([[10, 10], [60, 14], [58, 30], [12, 26]], dtype=float)
m = min_area_rect(skew)
print(f"min-area rect of skewed quad: {m.width:.2f} x {m.height:.2f} at {math.degrees(m.theta):.2f} deg, "
      f"area {m.area:.1f} >= quad area {quad_area(skew):.1f}")

# Decoding: feature pixel (10, 10) on a stride-4 map anchors at image point (40, 40).
q = decode_rbox((10, 10), (2, 6, 2, 2, 0.0), 4)
print("decoded quad:", q.tolist())
