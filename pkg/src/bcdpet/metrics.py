"""Image-quality metrics over phantom region masks.

All percent-valued metrics are returned already multiplied by 100.  Means
and sums are taken over boolean masks, so voxel ordering never matters.
RMSE and FOV bias are computed on raw activity images (no normalization).
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

# recorded next to every metrics table
CONVENTIONS = {
    "rmse": "raw activity over the FOV, x100",
    "fov_bias": "percent of true FOV total",
    "noise": "RMS over background of the per-voxel std (ddof 1), percent of true mean",
    "cnr": "single image, background std with ddof 1",
    "cr": "percent, mean over cold / hot VOIs",
}


def _mask(m, shape=None) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    if not m.any():
        raise ValueError("mask is empty")
    return m


def region_mean(x, mask) -> float:
    x = np.asarray(x, dtype=float)
    return float(x[_mask(mask, x.shape)].mean())


@dataclass
class RegionSet:
    """Masks used by the metric suite.

    Parameters
    ----------
    cold, hot : dict of name -> bool array
        Cold and hot volumes of interest.
    lesion : bool array or None
        Region whose contrast enters the CNR.
    background : bool array or None
        Uniform warm background ("liver") voxels.  Without it the CR, CNR
        and noise metrics are undefined.
    fov : bool array
        Field of view over which RMSE and FOV bias are taken.
    true_ratio : float
        Hot-to-warm activity ratio of the phantom.
    """

    cold: dict
    hot: dict
    lesion: np.ndarray | None
    background: np.ndarray | None
    fov: np.ndarray
    true_ratio: float

    def __post_init__(self):
        if (self.lesion is not None and self.background is not None
                and np.any(self.lesion & self.background)):
            raise ValueError("lesion and background masks overlap")
        for m in [self.lesion, self.background, *self.cold.values(), *self.hot.values()]:
            if m is not None and np.any(m & ~self.fov):
                raise ValueError("every region must lie inside the FOV")

    @classmethod
    def from_phantom(cls, masks: dict, true_ratio: float, lesion: str = "hot") -> "RegionSet":
        """Build from :func:`bcdpet.phantoms.make_phantom` masks.

        Names starting with ``"cold"`` / ``"hot"`` become VOIs.
        """
        cold = {k: v for k, v in masks.items() if k.startswith("cold")}
        hot = {k: v for k, v in masks.items() if k.startswith("hot")}
        return cls(cold, hot, masks[lesion], masks["background"], masks["fov"], float(true_ratio))


def contrast_recovery(x, voi, background, kind: str, true_ratio: float | None = None) -> float:
    """Contrast recovery in percent.

    Cold: ``(1 - C_voi / C_bkg) * 100``.
    Hot: ``(C_voi / C_bkg - 1) / (R_true - 1) * 100``.
    """
    c_bkg = region_mean(x, background)
    if c_bkg == 0:
        raise ValueError("background mean is zero")
    ratio = region_mean(x, voi) / c_bkg
    if kind == "cold":
        return (1.0 - ratio) * 100.0
    if kind == "hot":
        if true_ratio is None or true_ratio == 1:
            raise ValueError("hot contrast recovery needs a true ratio different from 1")
        return (ratio - 1.0) / (true_ratio - 1.0) * 100.0
    raise ValueError(f"kind must be 'cold' or 'hot', got {kind!r}")


def noise_across_realizations(images, x_true, liver_mask) -> float:
    """RMS over the liver of the voxel-wise std across realizations,
    relative to the true liver mean, in percent."""
    stack = np.asarray(images, dtype=float)
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise ValueError("need at least two realizations")
    m = _mask(liver_mask, stack.shape[1:])
    ref = float(np.asarray(x_true, dtype=float)[m].mean())
    if ref == 0:
        raise ValueError("true liver mean is zero")
    v = stack[:, m]
    # std is shift invariant; centering on one realization makes identical
    # realizations give exactly zero
    sd = (v - v[0]).std(axis=0, ddof=1)
    return float(np.sqrt(np.mean(sd ** 2)) / ref * 100.0)


def rmse(x, x_true, fov_mask) -> float:
    x = np.asarray(x, dtype=float)
    m = _mask(fov_mask, x.shape)
    d = x[m] - np.asarray(x_true, dtype=float)[m]
    return float(np.sqrt(np.mean(d * d)) * 100.0)


def cnr(x, lesion, background) -> float:
    """``(C_lesion - C_bkg) / STD_bkg`` with the unbiased background std."""
    x = np.asarray(x, dtype=float)
    b = x[_mask(background, x.shape)]
    if b.size < 2:
        raise ValueError("background needs at least two voxels")
    sd = b.std(ddof=1)
    if sd == 0:
        raise ValueError("background standard deviation is zero")
    return float((region_mean(x, lesion) - b.mean()) / sd)


def fov_bias(x, x_true, fov_mask) -> float:
    x = np.asarray(x, dtype=float)
    m = _mask(fov_mask, x.shape)
    tot = float(np.asarray(x_true, dtype=float)[m].sum())
    if tot == 0:
        raise ValueError("true activity in the FOV is zero")
    return float((x[m].sum() - tot) / tot * 100.0)


@dataclass
class MetricsReport:
    scenario: str
    algorithm: str
    iteration: int
    realization: int
    rmse: float
    fov_bias: float
    cnr: float = float("nan")
    cr_cold: float = float("nan")
    cr_hot: float = float("nan")
    noise: float = float("nan")
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for k in ("rmse", "noise"):
            v = getattr(self, k)
            if v < 0:
                raise ValueError(f"{k} must be nonnegative")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "extra"]

    def row(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


def evaluate_image(x, x_true, regions: RegionSet, *, scenario="", algorithm="",
                   iteration=0, realization=0) -> MetricsReport:
    """All single-image metrics.  Metrics whose preconditions fail are NaN."""

    def safe(fn, *a):
        try:
            return fn(*a)
        except ValueError:
            return float("nan")

    if regions.background is None:
        return MetricsReport(scenario=scenario, algorithm=algorithm, iteration=int(iteration),
                             realization=int(realization), rmse=rmse(x, x_true, regions.fov),
                             fov_bias=fov_bias(x, x_true, regions.fov))
    cold = [safe(contrast_recovery, x, m, regions.background, "cold") for m in regions.cold.values()]
    hot = [safe(contrast_recovery, x, m, regions.background, "hot", regions.true_ratio)
           for m in regions.hot.values()]
    return MetricsReport(
        scenario=scenario, algorithm=algorithm, iteration=int(iteration),
        realization=int(realization),
        rmse=rmse(x, x_true, regions.fov),
        fov_bias=fov_bias(x, x_true, regions.fov),
        cnr=(safe(cnr, x, regions.lesion, regions.background)
             if regions.lesion is not None else float("nan")),
        cr_cold=float(np.mean(cold)) if cold else float("nan"),
        cr_hot=float(np.mean(hot)) if hot else float("nan"),
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)  # shortest round-trip form, so rows are bit-stable
    return str(v)


def reports_to_csv(reports, path=None) -> str:
    """Serialize rows sorted by (scenario, algorithm, iteration, realization)."""
    rows = sorted(reports, key=lambda r: (r.scenario, r.algorithm, r.iteration, r.realization))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = MetricsReport.columns()
    w.writerow(cols)
    for r in rows:
        d = r.row()
        w.writerow([_fmt(d[c]) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text
