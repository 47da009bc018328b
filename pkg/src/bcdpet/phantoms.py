"""Synthetic ellipse phantoms and Poisson measurement simulation.

A phantom is a "warm" background ellipse (liver stand-in) carrying hot and
cold elliptical regions whose activity is given as a ratio to the
background.  Measurements are drawn as ``y ~ Poisson(A x + r)`` with a
spatially uniform mean background ``r`` sized to hit a requested random
fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .projector import Geometry, forward_project


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float = 0.0  # radians, counter-clockwise

    def mask(self, g: Geometry) -> np.ndarray:
        X, Y = g.voxel_centers()
        dx = X - self.center[0]
        dy = Y - self.center[1]
        c, s = np.cos(self.angle), np.sin(self.angle)
        xr = c * dx + s * dy
        yr = -s * dx + c * dy
        return (xr / self.axes[0]) ** 2 + (yr / self.axes[1]) ** 2 <= 1.0


@dataclass(frozen=True)
class Region:
    shape: Ellipse
    level_ratio: float
    label: str  # "hot" or "cold"
    name: str = ""

    def __post_init__(self):
        if self.level_ratio < 0:
            raise ValueError("level_ratio must be >= 0")
        if self.label == "hot" and not self.level_ratio > 1:
            raise ValueError("hot regions need level_ratio > 1")
        if self.label == "cold" and not self.level_ratio < 1:
            raise ValueError("cold regions need level_ratio < 1")
        if self.label not in ("hot", "cold"):
            raise ValueError(f"unknown region label {self.label!r}")


@dataclass(frozen=True)
class PhantomSpec:
    geometry: Geometry
    background: Ellipse
    background_level: float = 1.0
    regions: tuple[Region, ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class ScenarioSpec:
    phantom: PhantomSpec
    total_net_trues: float
    random_fraction: float
    n_realizations: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.total_net_trues > 0:
            raise ValueError("total_net_trues must be positive")
        if not 0 <= self.random_fraction < 1:
            raise ValueError("random_fraction must lie in [0, 1)")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")


@dataclass
class Measurement:
    """Integer counts ``y`` and known mean background ``r_bar`` per ray."""

    y: np.ndarray
    r_bar: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y)
        self.r_bar = np.asarray(self.r_bar, dtype=float)
        if self.y.shape != self.r_bar.shape:
            raise ValueError("y and r_bar shapes differ")
        if np.any(self.y < 0) or np.any(self.r_bar < 0):
            raise ValueError("counts and background must be nonnegative")


@dataclass
class Simulation:
    truth: np.ndarray
    measurements: list[Measurement]
    sino_mean: np.ndarray = field(repr=False)
    scale: float = 1.0


def make_phantom(spec: PhantomSpec) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Rasterize the phantom.

    Returns the activity image and boolean masks keyed by region name
    (``region<i>`` when unnamed), plus ``"background"`` for the warm voxels
    not covered by any region, ``"support"`` for the whole background
    ellipse and ``"fov"`` for the reconstruction field of view.  Later
    regions overwrite earlier ones where they overlap.
    """
    g = spec.geometry
    support = spec.background.mask(g)
    img = np.where(support, float(spec.background_level), 0.0)
    masks: dict[str, np.ndarray] = {}
    covered = np.zeros_like(support)
    for i, reg in enumerate(spec.regions):
        m = reg.shape.mask(g)
        if not m.any():
            raise ValueError(f"region {i} covers no voxels")
        if np.any(m & ~support):
            raise ValueError(f"region {i} extends outside the background support")
        img[m] = spec.background_level * reg.level_ratio
        name = reg.name or f"region{i}"
        for other in masks.values():
            other &= ~m
        masks[name] = m.copy()
        covered |= m
    masks["background"] = support & ~covered
    masks["support"] = support
    masks["fov"] = g.fov_mask() | support
    return img, masks


def uniform_background(total_trues: float, random_fraction: float, shape) -> np.ndarray:
    """Uniform per-ray mean background with ``sum = trues * RF / (1 - RF)``."""
    n = int(np.prod(shape))
    total = total_trues * random_fraction / (1.0 - random_fraction)
    return np.full(shape, total / n)


def realization_seed(seed: int, m: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(m)])


def simulate_measurement(x_true, g: Geometry, s: ScenarioSpec) -> Simulation:
    """Scale ``x_true`` to the requested trues and draw ``M`` noisy sinograms.

    Realization ``m`` uses its own stream derived from ``(s.seed, m)``, so any
    single realization can be regenerated in isolation.
    """
    x_true = np.asarray(x_true, dtype=float)
    t = forward_project(x_true, g)
    total = t.sum()
    if not total > 0:
        raise ValueError("phantom projects to zero counts; cannot scale to the requested trues")
    scale = s.total_net_trues / total
    x_scaled = x_true * scale
    t = t * scale
    r_bar = uniform_background(s.total_net_trues, s.random_fraction, t.shape)
    mean = t + r_bar
    meas = []
    for m in range(s.n_realizations):
        rng = np.random.default_rng(realization_seed(s.seed, m))
        meas.append(Measurement(rng.poisson(mean).astype(np.int64), r_bar.copy(), seed=m))
    return Simulation(truth=x_scaled, measurements=meas, sino_mean=mean, scale=scale)


# Preset phantoms mirroring the train/test shift used for the learned
# denoiser: the test phantom changes liver shape, lesion placement/size,
# and the hot:warm ratio.

def training_phantom(g: Geometry, hot_ratio: float = 9.0) -> PhantomSpec:
    r = min(g.n_x, g.n_y) * g.voxel_size / 64.0
    return PhantomSpec(
        geometry=g,
        background=Ellipse((0.0, 0.0), (26 * r, 19 * r), 0.0),
        background_level=1.0,
        regions=(
            Region(Ellipse((-9 * r, -3 * r), (5 * r, 5 * r)), hot_ratio, "hot", "hot"),
            Region(Ellipse((11 * r, 4 * r), (4 * r, 3.5 * r)), 0.0, "cold", "cold"),
            Region(Ellipse((4 * r, -10 * r), (3 * r, 3 * r)), hot_ratio, "hot", "hot2"),
        ),
    )


def testing_phantom(g: Geometry, hot_ratio: float = 4.0) -> PhantomSpec:
    r = min(g.n_x, g.n_y) * g.voxel_size / 64.0
    return PhantomSpec(
        geometry=g,
        background=Ellipse((1 * r, 1 * r), (22 * r, 23 * r), 0.35),
        background_level=1.0,
        regions=(
            Region(Ellipse((6 * r, 8 * r), (6.5 * r, 4.5 * r), 0.5), hot_ratio, "hot", "hot"),
            Region(Ellipse((-8 * r, -6 * r), (4.5 * r, 4.5 * r)), 0.0, "cold", "cold"),
        ),
    )


