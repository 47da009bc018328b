"""Experiment configuration (TOML, schema version 1).

Layout::

    schema_version = 1
    seed = 0
    out = "runs/demo"

    [geometry]            # Geometry fields
    n_x = 64
    n_y = 64
    n_angles = 96

    [train]               # training scenario
    phantom = "training"  # "training" | "testing" preset
    hot_ratio = 9.0
    total_net_trues = 2e5
    random_fraction = 0.909
    n_realizations = 5

    [test]                # same keys as [train]

    [denoiser]
    K = 78
    R = 9                 # taps per filter, an odd square (9 = 3x3)

    [denoiser.train]      # TrainConfig fields
    epochs = 200

    [recon]               # ReconConfig fields, with [recon.tv] / [recon.nlm]
    algorithm = "bcdnet"
    T = 30

    [sweep]
    algorithm = "tv_pdhg"
    grid = [...]          # explicit list, or
    min_exp = -15         # powers of two 2**min_exp .. 2**max_exp
    max_exp = 15

Every section is optional; missing keys take the defaults below.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .denoiser import TrainConfig
from .phantoms import PhantomSpec, ScenarioSpec, testing_phantom, training_phantom
from .projector import Geometry
from .recon import ALGORITHMS, ReconConfig

SCHEMA_VERSION = 1
PHANTOM_PRESETS = {"training": training_phantom, "testing": testing_phantom}

# tags for the per-purpose seed streams derived from the global seed
SEED_TAGS = {"train": 1, "test": 2, "denoiser": 3}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def derived_seed(seed: int, purpose: str) -> int:
    ss = np.random.SeedSequence([int(seed), SEED_TAGS[purpose]])
    return int(ss.generate_state(1)[0])


@dataclass
class ScenarioConfig:
    phantom: str = "training"
    hot_ratio: float = 9.0
    total_net_trues: float = 2e5
    random_fraction: float = 0.909
    n_realizations: int = 5

    def phantom_spec(self, g: Geometry) -> PhantomSpec:
        return PHANTOM_PRESETS[self.phantom](g, self.hot_ratio)

    def scenario(self, g: Geometry, seed: int) -> ScenarioSpec:
        return ScenarioSpec(self.phantom_spec(g), self.total_net_trues, self.random_fraction,
                            self.n_realizations, seed)


def _test_default():
    return ScenarioConfig("testing", 4.0, 5e5, 0.875, 5)


@dataclass
class SweepConfig:
    algorithm: str = "tv_pdhg"
    grid: list | None = None
    min_exp: int = -15
    max_exp: int = 15

    def betas(self) -> list[float]:
        if self.grid is not None:
            return [float(b) for b in self.grid]
        return [2.0 ** k for k in range(self.min_exp, self.max_exp + 1)]


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    geometry: Geometry = field(default_factory=lambda: Geometry(64, 64, n_angles=96))
    train: ScenarioConfig = field(default_factory=ScenarioConfig)
    test: ScenarioConfig = field(default_factory=_test_default)
    K: int = 78
    R: int = 9
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def scenario(self, name: str) -> ScenarioSpec:
        sc = {"train": self.train, "test": self.test}[name]
        return sc.scenario(self.geometry, derived_seed(self.seed, name))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "geometry": self.geometry.to_dict(),
            "train": asdict(self.train),
            "test": asdict(self.test),
            "denoiser": {"K": self.K, "R": self.R, "train": asdict(self.train_cfg)},
            "recon": asdict(self.recon),
            "sweep": asdict(self.sweep),
        }


def _build(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    bad = sorted(set(d) - known)
    if bad:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(bad)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}]: {e}") from e


def parse_config(d: dict) -> ExperimentConfig:
    d = dict(d)
    version = d.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    allowed = {"seed", "out", "geometry", "train", "test", "denoiser", "recon", "sweep"}
    bad = sorted(set(d) - allowed)
    if bad:
        raise ConfigError(f"unknown top-level key(s): {', '.join(bad)}")
    cfg = ExperimentConfig()
    if "seed" in d:
        cfg.seed = int(d["seed"])
    if "out" in d:
        cfg.out = str(d["out"])
    if "geometry" in d:
        cfg.geometry = _build(Geometry, d["geometry"], "geometry")
    for name in ("train", "test"):
        if name in d:
            sc = _build(ScenarioConfig, {**asdict(getattr(cfg, name)), **d[name]}, name)
            if sc.phantom not in PHANTOM_PRESETS:
                raise ConfigError(f"[{name}] unknown phantom {sc.phantom!r}")
            try:
                sc.scenario(cfg.geometry, 0)
            except ValueError as e:
                raise ConfigError(f"[{name}]: {e}") from e
            setattr(cfg, name, sc)
    den = dict(d.get("denoiser", {}))
    tc = den.pop("train", None)
    for k in ("K", "R"):
        if k in den:
            setattr(cfg, k, int(den.pop(k)))
    if den:
        raise ConfigError(f"unknown key(s) in [denoiser]: {', '.join(sorted(den))}")
    if cfg.K < 1 or cfg.R < 1:
        raise ConfigError("[denoiser] K and R must be positive")
    cfg.train_cfg = _build(TrainConfig, tc, "denoiser.train")
    cfg.recon = _build(ReconConfig, d.get("recon"), "recon")
    cfg.sweep = _build(SweepConfig, d.get("sweep"), "sweep")
    if cfg.sweep.algorithm not in ALGORITHMS:
        raise ConfigError(f"[sweep] unknown algorithm {cfg.sweep.algorithm!r}")
    return cfg


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as f:
            d = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(d)
