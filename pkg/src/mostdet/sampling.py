"""Localization-based sampling offsets for a k x k deformable grid.

Given the coarse box predicted at a feature location, the offsets move the
regular grid so that its points spread over the whole box, corners included.
All coordinates are ``(x, y)`` in feature units unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mostdet.geometry import decode_rbox


@dataclass(frozen=True)
class SamplingGrid:
    k: int = 3

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("grid size k must be a positive odd integer")

    @property
    def regular_offsets(self) -> np.ndarray:
        """``(k*k, 2)`` offsets, row-major from top-left, e.g. {-1,0,1}^2."""
        r = np.arange(self.k) - (self.k - 1) / 2
        gy, gx = np.meshgrid(r, r, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def box_lattice(quad, k: int) -> np.ndarray:
    """Corner-inclusive bilinear ``k x k`` lattice over a quad, row-major.

    ``k == 1`` yields the vertex centroid.
    """
    tl, tr, br, bl = np.asarray(quad, dtype=np.float64)
    if k == 1:
        return ((tl + tr + br + bl) / 4)[None, :]
    t = np.arange(k) / (k - 1)
    v, u = np.meshgrid(t, t, indexing="ij")
    u, v = u.ravel()[:, None], v.ravel()[:, None]
    return (1 - u) * (1 - v) * tl + u * (1 - v) * tr + u * v * br + (1 - u) * v * bl


def tfam_offsets(coarse, p0, grid: SamplingGrid | None = None, stride: int = 4) -> np.ndarray:
    """Offsets ``(k*k, 2)`` that carry ``p0 + p_n`` onto the lattice spanning
    the coarse box decoded at ``p0``."""
    grid = grid or SamplingGrid()
    p0 = np.asarray(p0, dtype=np.float64)
    quad = decode_rbox(p0, coarse, stride) / stride
    return box_lattice(quad, grid.k) - (p0 + grid.regular_offsets)


def sampled_points(p0, grid: SamplingGrid | None = None, offsets=None) -> np.ndarray:
    """Sampling locations ``p0 + p_n + dp_n``."""
    grid = grid or SamplingGrid()
    base = np.asarray(p0, dtype=np.float64) + grid.regular_offsets
    if offsets is None:
        return base
    return base + np.asarray(offsets, dtype=np.float64)


def combine_offsets(localization, feature, use_localization=None) -> np.ndarray:
    """Mix localization-based offsets with externally predicted ones.

    By default even-indexed grid points take the localization rule and odd
    ones the supplied feature-based offsets.
    """
    loc = np.asarray(localization, dtype=np.float64)
    feat = np.asarray(feature, dtype=np.float64)
    if loc.shape != feat.shape:
        raise ValueError("offset arrays must have the same shape")
    if use_localization is None:
        use_localization = np.arange(len(loc)) % 2 == 0
    sel = np.asarray(use_localization, dtype=bool)[:, None]
    return np.where(sel, loc, feat)


def tfam_offset_field(geometry, stride: int = 4, grid: SamplingGrid | None = None) -> np.ndarray:
    """Offsets for every location of an ``(h, w, 5)`` coarse geometry map.

    Returns ``(h, w, k*k, 2)``, the layout a deformable convolution expects
    once flattened to ``2*k*k`` channels.
    """
    grid = grid or SamplingGrid()
    g = np.asarray(geometry, dtype=np.float64)
    h, w = g.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    t, r, b, l, th = (g[..., i] for i in range(5))
    c, s = np.cos(th), np.sin(th)
    lx = np.stack([-l, r, r, -l], axis=-1)
    ly = np.stack([-t, -t, b, b], axis=-1)
    qx = xs[..., None] + (c[..., None] * lx - s[..., None] * ly) / stride
    qy = ys[..., None] + (s[..., None] * lx + c[..., None] * ly) / stride
    quads = np.stack([qx, qy], axis=-1)  # (h, w, 4, 2)
    k = grid.k
    if k == 1:
        lattice = quads.mean(axis=2, keepdims=True)
    else:
        tt = np.arange(k) / (k - 1)
        v, u = np.meshgrid(tt, tt, indexing="ij")
        u, v = u.ravel()[:, None], v.ravel()[:, None]
        lattice = ((1 - u) * (1 - v) * quads[..., 0:1, :] + u * (1 - v) * quads[..., 1:2, :]
                   + u * v * quads[..., 2:3, :] + (1 - u) * v * quads[..., 3:4, :])
    base = np.stack([xs, ys], axis=-1)[..., None, :] + grid.regular_offsets
    return lattice - base
