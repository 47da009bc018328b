"""2-D parallel-beam system model.

The forward operator is pixel-driven: every voxel center is projected onto
the detector at each view and its value is split between the two nearest
bins by linear interpolation.  Forward and back projection share the same
precomputed weight tables, which makes the pair an exact adjoint up to
floating point rounding.

Images are arrays of shape ``(n_y, n_x)``; sinograms are ``(n_angles, n_bins)``.
Attenuation or normalization would enter as per-ray multiplicative factors
applied to the sinogram after :meth:`Projector.forward` (and before
:meth:`Projector.back`); none are modeled here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Geometry:
    """Image grid plus parallel-beam detector.

    ``n_bins=None`` picks the smallest odd bin count whose detector covers
    the grid diagonal, so every voxel is seen at every angle.
    """

    n_x: int
    n_y: int
    voxel_size: float = 1.0
    n_angles: int = 96
    n_bins: int | None = None
    bin_width: float = 1.0

    def __post_init__(self):
        if self.n_bins is None:
            diag = math.hypot(self.n_x, self.n_y) * self.voxel_size / self.bin_width
            nb = int(math.ceil(diag)) + 2
            if nb % 2 == 0:
                nb += 1
            object.__setattr__(self, "n_bins", nb)
        if min(self.n_x, self.n_y, self.n_angles, self.n_bins) < 1:
            raise ValueError("grid, angle and bin counts must be >= 1")
        if self.voxel_size <= 0 or self.bin_width <= 0:
            raise ValueError("voxel_size and bin_width must be positive")

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def n_p(self) -> int:
        return self.n_x * self.n_y

    @property
    def n_d(self) -> int:
        return self.n_angles * self.n_bins

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    def voxel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical (x, y) coordinates of voxel centers, each ``image_shape``."""
        xs = (np.arange(self.n_x) - (self.n_x - 1) / 2.0) * self.voxel_size
        ys = (np.arange(self.n_y) - (self.n_y - 1) / 2.0) * self.voxel_size
        return np.meshgrid(xs, ys)

    def fov_mask(self) -> np.ndarray:
        """Voxels whose footprint stays on the detector at every angle."""
        X, Y = self.voxel_centers()
        half = (self.n_bins - 1) / 2.0 * self.bin_width
        return np.hypot(X, Y) + self.voxel_size <= half

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_y": self.n_y,
            "voxel_size": self.voxel_size,
            "n_angles": self.n_angles,
            "n_bins": self.n_bins,
            "bin_width": self.bin_width,
        }


def _bin_coordinate(g: Geometry, theta: float, x: float, y: float) -> float:
    return (x * math.cos(theta) + y * math.sin(theta)) / g.bin_width + (g.n_bins - 1) / 2.0


class Projector:
    """Matrix-free forward/back projector for one :class:`Geometry`."""

    def __init__(self, geometry: Geometry):
        self.geometry = geometry
        g = geometry
        X, Y = g.voxel_centers()
        th = g.angles[:, None]
        u = (X.ravel()[None, :] * np.cos(th) + Y.ravel()[None, :] * np.sin(th)) / g.bin_width
        u += (g.n_bins - 1) / 2.0
        i0 = np.floor(u).astype(np.int64)
        frac = u - i0
        scale = g.voxel_size ** 2 / g.bin_width
        w0 = (1.0 - frac) * scale
        w1 = frac * scale
        i1 = i0 + 1
        # out-of-detector taps get zero weight and a harmless in-range index
        bad0 = (i0 < 0) | (i0 >= g.n_bins)
        bad1 = (i1 < 0) | (i1 >= g.n_bins)
        w0[bad0] = 0.0
        w1[bad1] = 0.0
        i0 = np.clip(i0, 0, g.n_bins - 1)
        i1 = np.clip(i1, 0, g.n_bins - 1)
        offs = (np.arange(g.n_angles) * g.n_bins)[:, None]
        self._i0 = i0 + offs
        self._i1 = i1 + offs
        self._w0 = w0
        self._w1 = w1

    def _check(self, arr, shape, what):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != shape:
            if arr.size == shape[0] * shape[1] and arr.ndim == 1:
                return arr.reshape(shape)
            raise ValueError(f"{what} has shape {arr.shape}, geometry expects {shape}")
        return arr

    def forward(self, x) -> np.ndarray:
        """Return ``A x`` as an ``(n_angles, n_bins)`` sinogram."""
        g = self.geometry
        x = self._check(x, g.image_shape, "image").ravel()
        xa = np.broadcast_to(x, self._w0.shape)
        s = np.bincount(self._i0.ravel(), weights=(self._w0 * xa).ravel(), minlength=g.n_d)
        s += np.bincount(self._i1.ravel(), weights=(self._w1 * xa).ravel(), minlength=g.n_d)
        return s.reshape(g.sino_shape)

    def back(self, s) -> np.ndarray:
        """Return ``A^T s`` as an ``(n_y, n_x)`` image."""
        g = self.geometry
        s = self._check(s, g.sino_shape, "sinogram").ravel()
        b = (self._w0 * s[self._i0] + self._w1 * s[self._i1]).sum(axis=0)
        return b.reshape(g.image_shape)

    @cached_property
    def sensitivity(self) -> np.ndarray:
        """Column sums ``a_j = sum_i a_ij``."""
        s = self.back(np.ones(self.geometry.sino_shape))
        s.setflags(write=False)
        return s

    @cached_property
    def support(self) -> np.ndarray:
        m = self.sensitivity > 0
        m.setflags(write=False)
        return m

    def norm_estimate(self, n_iter: int = 50, seed: int = 0) -> float:
        """Power-iteration estimate of the spectral norm ``||A||``."""
        rng = np.random.default_rng(seed)
        x = rng.random(self.geometry.image_shape)
        x /= np.linalg.norm(x)
        lam = 0.0
        for _ in range(n_iter):
            y = self.back(self.forward(x))
            lam = np.linalg.norm(y)
            x = y / lam
        return math.sqrt(lam)


@lru_cache(maxsize=16)
def get_projector(g: Geometry) -> Projector:
    return Projector(g)


def forward_project(x, g: Geometry) -> np.ndarray:
    return get_projector(g).forward(x)


def back_project(s, g: Geometry) -> np.ndarray:
    return get_projector(g).back(s)


def sensitivity(g: Geometry) -> np.ndarray:
    return get_projector(g).sensitivity


def system_matrix(g: Geometry, max_pixels: int = 32 * 32) -> sp.csr_matrix:
    """Explicit sparse ``A`` built voxel by voxel, for cross-checking.

    Deliberately written as a plain loop over voxels and views so that it
    does not share code with the vectorized tables in :class:`Projector`.
    """
    if g.n_p > max_pixels:
        raise ValueError(f"explicit matrix limited to {max_pixels} voxels, got {g.n_p}")
    rows, cols, vals = [], [], []
    scale = g.voxel_size ** 2 / g.bin_width
    for iy in range(g.n_y):
        y = (iy - (g.n_y - 1) / 2.0) * g.voxel_size
        for ix in range(g.n_x):
            x = (ix - (g.n_x - 1) / 2.0) * g.voxel_size
            j = iy * g.n_x + ix
            for a in range(g.n_angles):
                u = _bin_coordinate(g, a * math.pi / g.n_angles, x, y)
                b = math.floor(u)
                f = u - b
                for bin_, w in ((b, 1.0 - f), (b + 1, f)):
                    if 0 <= bin_ < g.n_bins and w != 0.0:
                        rows.append(a * g.n_bins + bin_)
                        cols.append(j)
                        vals.append(w * scale)
    return sp.coo_matrix((vals, (rows, cols)), shape=(g.n_d, g.n_p)).tocsr()


def write_coo_text(A: sp.spmatrix, path) -> None:
    """Write ``row col weight`` triplets, one nonzero per line."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def read_coo_text(path, shape) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.coo_matrix(
        (data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape
    ).tocsr()
