"""``bcdpet`` command line: simulate, train, reconstruct, evaluate, sweep-beta.

Every sub-command takes ``--config`` (TOML, see :mod:`bcdpet.config`),
``--seed`` (overrides the config seed) and ``--out`` (output directory,
overrides the config ``out``).  Log verbosity comes from the ``BCDPET_LOG``
environment variable (``WARNING`` by default).

Output layout under ``--out``::

    train/manifest.json, test/manifest.json   simulate
    model.cidm, model.json, train_loss.csv    train
    recon/<algorithm>/manifest.json           reconstruct (+ images, trace CSVs)
    metrics.csv                               evaluate
    sweep_<algorithm>.csv                     sweep-beta

Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import ConfigError, ExperimentConfig, derived_seed, load_config
from .denoiser import load_model, save_model
from .fileio import FormatError, checksum64, read_array, write_array
from .phantoms import Measurement, make_phantom, simulate_measurement
from .projector import Geometry, get_projector
from .recon import ALGORITHMS, reconstruct
from .training import train_bcdnet

log = logging.getLogger("bcdpet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
MANIFEST_VERSION = 1
LOG_ENV = "BCDPET_LOG"


class RuntimeFailure(RuntimeError):
    pass


# -- manifests -------------------------------------------------------------------

def _file_entry(root: Path, path: Path) -> dict:
    return {"path": path.relative_to(root).as_posix(),
            "blake2b64": checksum64(path.read_bytes()[:-8]).hex()}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest_files(man: dict):
    for f in man.get("files", {}).values():
        yield f
    for m in man.get("measurements", []):
        yield m["y"]
        yield m["r_bar"]
    for it in man.get("images", []):
        yield it["image"]


def verify_manifest(path) -> list[str]:
    """Return a list of problems; empty when every referenced file is intact."""
    path = Path(path)
    man = json.loads(path.read_text())
    problems = []
    for f in _manifest_files(man):
        p = path.parent / f["path"]
        if not p.exists():
            problems.append(f"missing {f['path']}")
            continue
        buf = p.read_bytes()
        if checksum64(buf[:-8]) != buf[-8:] or buf[-8:].hex() != f["blake2b64"]:
            problems.append(f"checksum mismatch {f['path']}")
    return problems


def _load_manifest(path) -> tuple[Path, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest {path} not found")
    bad = verify_manifest(path)
    if bad:
        raise RuntimeFailure(f"{path}: " + "; ".join(bad))
    return path.parent, json.loads(path.read_text())


def _check_geometry(cfg: ExperimentConfig, man: dict) -> Geometry:
    g = Geometry(**man["geometry"])
    if g != cfg.geometry:
        raise ConfigError(f"geometry mismatch: config {cfg.geometry.to_dict()} vs data {man['geometry']}")
    return g


def _measurements(root: Path, man: dict) -> list[Measurement]:
    out = []
    for e in man["measurements"]:
        y = read_array(root / e["y"]["path"])
        out.append(Measurement(np.rint(y).astype(np.int64), read_array(root / e["r_bar"]["path"]),
                               seed=e["realization"]))
    return out


def _truth_and_masks(root: Path, man: dict):
    files = man["files"]
    if "truth" not in files:
        raise RuntimeFailure("manifest lists no truth image")
    truth = read_array(root / files["truth"]["path"])
    masks = {k[5:]: read_array(root / f["path"]) > 0.5
             for k, f in files.items() if k.startswith("mask_")}
    return truth, masks


# -- sub-commands ----------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path, scenarios=("train", "test")) -> list[Path]:
    """Write truth, masks and M measurements per scenario, plus a manifest."""
    g = cfg.geometry
    written = []
    for name in scenarios:
        sc_cfg = getattr(cfg, name)
        spec = cfg.scenario(name)
        img, masks = make_phantom(spec.phantom)
        sim = simulate_measurement(img, g, spec)
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        files = {"truth": _file_entry(out / name, write_array(d / "truth.img", sim.truth))}
        for k, mk in sorted(masks.items()):
            files["mask_" + k] = _file_entry(d, write_array(d / f"mask_{k}.img", mk.astype(float)))
        meas = []
        for mm in sim.measurements:
            py = write_array(d / f"meas_{mm.seed:03d}_y.img", mm.y.astype(float))
            pr = write_array(d / f"meas_{mm.seed:03d}_r.img", mm.r_bar)
            meas.append({"realization": mm.seed,
                         "seed_entropy": [spec.seed, mm.seed],
                         "y": _file_entry(d, py), "r_bar": _file_entry(d, pr)})
        man = {
            "kind": "scenario",
            "manifest_version": MANIFEST_VERSION,
            "scenario": name,
            "global_seed": cfg.seed,
            "scenario_seed": spec.seed,
            "geometry": g.to_dict(),
            "settings": vars(sc_cfg).copy(),
            "scale": sim.scale,
            "true_ratio": sc_cfg.hot_ratio,
            "files": files,
            "measurements": meas,
        }
        p = d / "manifest.json"
        _write_json(p, man)
        written.append(p)
        log.info("simulate %s: %d realizations -> %s", name, len(meas), d)
    return written


def cmd_train(cfg: ExperimentConfig, out: Path, manifest=None) -> Path:
    manifest = Path(manifest) if manifest else out / "train" / "manifest.json"
    root, man = _load_manifest(manifest)
    _check_geometry(cfg, man)
    truth, _ = _truth_and_masks(root, man)
    meas = _measurements(root, man)
    P = get_projector(cfg.geometry)
    seed = derived_seed(cfg.seed, "denoiser")
    model = train_bcdnet(meas, truth, P, T=cfg.recon.T, K=cfg.K, R=cfg.R,
                         train_cfg=replace(cfg.train_cfg, seed=seed), recon_cfg=cfg.recon,
                         seed=seed,
                         callback=lambda n, p, h: log.info("stage %d loss %.4g", n, h[-1]))
    out.mkdir(parents=True, exist_ok=True)
    mp = save_model(model, out / "model.cidm")
    with open(out / "train_loss.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["stage", "epoch", "loss"])
        for n, hist in enumerate(model.training_metadata["loss_history"], start=1):
            for e, v in enumerate(hist):
                w.writerow([n, e, repr(float(v))])
    _write_json(out / "model.json", {
        "kind": "model", "manifest_version": MANIFEST_VERSION, "global_seed": cfg.seed,
        "denoiser_seed": seed, "T": model.T, "K": cfg.K, "R": cfg.R,
        "train_manifest": os.path.relpath(manifest, out),
        "files": {"model": _file_entry(out, mp)},
    })
    return mp


def _recon_cfg(cfg: ExperimentConfig, algorithm: str | None):
    rc = cfg.recon
    if algorithm is not None:
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        rc = replace(rc, algorithm=algorithm)
    return rc


def _get_model(rc, model_path):
    if rc.algorithm != "bcdnet":
        return None
    if model_path is None or not Path(model_path).exists():
        raise ConfigError("algorithm bcdnet needs an existing --model file")
    return load_model(model_path)


def cmd_reconstruct(cfg: ExperimentConfig, out: Path, manifest=None, algorithm=None,
                    model_path=None, realizations=None, save_every: int = 0) -> Path:
    """Reconstruct measurements; write final (and optionally intermediate) images."""
    manifest = Path(manifest) if manifest else out / "test" / "manifest.json"
    rc = _recon_cfg(cfg, algorithm)
    model = _get_model(rc, model_path)
    root, man = _load_manifest(manifest)
    _check_geometry(cfg, man)
    P = get_projector(cfg.geometry)
    meas = _measurements(root, man)
    if realizations is not None:
        meas = [m for m in meas if m.seed in set(realizations)]
    d = out / "recon" / rc.algorithm
    d.mkdir(parents=True, exist_ok=True)
    truth, masks = _truth_and_masks(root, man) if "truth" in man.get("files", {}) else (None, {})
    regions = None
    if truth is not None and "fov" in masks:
        regions = _regions(masks, man.get("true_ratio", float("nan")))
    images, traces = [], []
    for m in meas:
        _, trace = reconstruct(m, P, rc, model)
        traces.append((m.seed, trace))
        last = len(trace) - 1
        keep = [last] if save_every <= 0 else sorted(set(range(0, last + 1, save_every)) | {last})
        for it in keep:
            p = write_array(d / f"r{m.seed:03d}_it{it:03d}.img", trace.images[it])
            images.append({"realization": m.seed, "iteration": it, "image": _file_entry(d, p)})
    _write_traces(d, traces, truth, regions)
    p = d / "manifest.json"
    _write_json(p, {
        "kind": "reconstruction", "manifest_version": MANIFEST_VERSION,
        "algorithm": rc.algorithm, "scenario": man["scenario"],
        "data_manifest": os.path.relpath(manifest, d), "geometry": man["geometry"],
        "recon_config": cfg.to_dict()["recon"], "images": images,
    })
    return p


def _write_traces(d: Path, traces, truth, regions) -> None:
    """One CSV per realization; image metrics are added when the truth is known."""
    noise = {}
    if regions is not None and regions.background is not None and len(traces) >= 2:
        n = min(len(t) for _, t in traces)
        for i in range(n):
            noise[i] = M.noise_across_realizations([t.images[i] for _, t in traces], truth,
                                                   regions.background)
    for seed, trace in traces:
        with open(d / f"trace_r{seed:03d}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            head = ["iteration", "nll", "objective", "beta"]
            if regions is not None:
                head += ["rmse", "cnr", "noise"]
            w.writerow(head)
            for i in range(len(trace)):
                row = [i, repr(trace.nll[i]), repr(trace.objective[i]), repr(trace.beta[i])]
                if regions is not None:
                    r = M.evaluate_image(trace.images[i], truth, regions)
                    row += [repr(r.rmse), repr(r.cnr), repr(noise.get(i, float("nan")))]
                w.writerow(row)


def _regions(masks: dict, true_ratio: float):
    if "background" not in masks:
        log.warning("no background (liver) mask: noise, CR and CNR omitted")
    fov = masks.get("fov")
    if fov is None:
        raise ConfigError("masks must include 'fov'")
    return M.RegionSet(
        cold={k: v for k, v in masks.items() if k.startswith("cold")},
        hot={k: v for k, v in masks.items() if k.startswith("hot")},
        lesion=masks.get("hot"), background=masks.get("background"), fov=fov,
        true_ratio=true_ratio)


def cmd_evaluate(cfg: ExperimentConfig, out: Path, recon_manifests, data_manifest=None,
                 out_csv=None) -> Path:
    """One metrics row per (algorithm, iteration, realization)."""
    reports = []
    for rpath in recon_manifests:
        rroot, rman = _load_manifest(rpath)
        dpath = Path(data_manifest) if data_manifest else (rroot / rman["data_manifest"])
        droot, dman = _load_manifest(dpath)
        if rman["geometry"] != dman["geometry"]:
            raise ConfigError(f"{rpath}: geometry differs from {dpath}")
        truth, masks = _truth_and_masks(droot, dman)
        regions = _regions(masks, dman.get("true_ratio", float("nan")))
        groups: dict[int, list] = {}
        for e in rman["images"]:
            x = read_array(rroot / e["image"]["path"])
            if x.shape != truth.shape:
                raise ConfigError(f"image {e['image']['path']} has the wrong shape")
            r = M.evaluate_image(x, truth, regions, scenario=dman["scenario"],
                                 algorithm=rman["algorithm"], iteration=e["iteration"],
                                 realization=e["realization"])
            reports.append(r)
            groups.setdefault(e["iteration"], []).append((r, x))
        if regions.background is not None:
            for rows in groups.values():
                if len(rows) >= 2:
                    nz = M.noise_across_realizations([x for _, x in rows], truth, regions.background)
                    for r, _ in rows:
                        r.noise = nz
    out.mkdir(parents=True, exist_ok=True)
    path = Path(out_csv) if out_csv else out / "metrics.csv"
    M.reports_to_csv(reports, path)
    meta = {"csv": path.name, "conventions": M.CONVENTIONS,
            "reconstructions": [str(p) for p in recon_manifests]}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def cmd_sweep_beta(cfg: ExperimentConfig, out: Path, manifest=None, algorithm=None,
                   model_path=None, realization: int = 0, grid=None) -> Path:
    """Final RMSE / CNR of one measurement for each beta on the grid."""
    manifest = Path(manifest) if manifest else out / "test" / "manifest.json"
    algorithm = algorithm or cfg.sweep.algorithm
    betas = list(grid) if grid is not None else cfg.sweep.betas()
    if not betas:
        raise ConfigError("empty beta grid")
    if any(not b >= 0 for b in betas):
        raise ConfigError("beta values must be nonnegative")
    rc = _recon_cfg(cfg, algorithm)
    if rc.algorithm == "em":
        raise ConfigError("sweep-beta needs tv_pdhg, nlm_admm or bcdnet")
    model = _get_model(rc, model_path)
    root, man = _load_manifest(manifest)
    _check_geometry(cfg, man)
    truth, masks = _truth_and_masks(root, man)
    regions = _regions(masks, man.get("true_ratio", float("nan")))
    meas = [m for m in _measurements(root, man) if m.seed == realization]
    if not meas:
        raise ConfigError(f"realization {realization} not in {manifest}")
    P = get_projector(cfg.geometry)
    rows = []
    for b in betas:
        if rc.algorithm == "tv_pdhg":
            c = replace(rc, tv=replace(rc.tv, beta=b))
        elif rc.algorithm == "nlm_admm":
            c = replace(rc, nlm=replace(rc.nlm, beta=b))
        else:
            c = replace(rc, beta_fixed=b)
        x, _ = reconstruct(meas[0], P, c, model)
        r = M.evaluate_image(x, truth, regions, scenario=man["scenario"], algorithm=rc.algorithm,
                             realization=realization)
        rows.append((b, r.rmse, r.cnr))
        log.info("beta %g: rmse %.4g cnr %.4g", b, r.rmse, r.cnr)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{rc.algorithm}.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["beta", "rmse", "cnr"])
        for b, rm, cn in rows:
            w.writerow([repr(float(b)), repr(rm), repr(cn)])
    return path


# -- argument parsing --------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcdpet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        return p

    p = common(sub.add_parser("simulate", help="simulate train/test scenarios"))
    p.add_argument("--scenario", choices=["train", "test", "both"], default="both")

    p = common(sub.add_parser("train", help="train a BCD-Net model"))
    p.add_argument("--manifest", help="training scenario manifest")

    p = common(sub.add_parser("reconstruct", help="reconstruct measurements"))
    p.add_argument("--manifest", help="scenario manifest (default <out>/test)")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--model", help="model file for bcdnet")
    p.add_argument("--realization", type=int, action="append")
    p.add_argument("--save-every", type=int, default=0,
                   help="also keep every k-th iterate (0: final only)")

    p = common(sub.add_parser("evaluate", help="compute metrics to CSV"))
    p.add_argument("recon", nargs="+", help="reconstruction manifest(s)")
    p.add_argument("--manifest", help="scenario manifest with truth and masks")
    p.add_argument("--csv", help="output CSV path (default <out>/metrics.csv)")

    p = common(sub.add_parser("sweep-beta", help="RMSE/CNR over a beta grid"))
    p.add_argument("--manifest")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--model")
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--grid", help="comma-separated beta values")
    return ap


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.out)
        if args.command == "simulate":
            sc = ("train", "test") if args.scenario == "both" else (args.scenario,)
            res = cmd_simulate(cfg, out, sc)
        elif args.command == "train":
            res = cmd_train(cfg, out, args.manifest)
        elif args.command == "reconstruct":
            res = cmd_reconstruct(cfg, out, args.manifest, args.algorithm, args.model,
                                  args.realization, args.save_every)
        elif args.command == "evaluate":
            res = cmd_evaluate(cfg, out, args.recon, args.manifest, args.csv)
        else:
            grid = None
            if args.grid is not None:
                try:
                    grid = [float(v) for v in args.grid.split(",") if v.strip()]
                except ValueError as e:
                    raise ConfigError(f"bad --grid: {e}") from e
            res = cmd_sweep_beta(cfg, out, args.manifest, args.algorithm, args.model,
                                 args.realization, grid)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (RuntimeFailure, FormatError, OSError, ValueError, ArithmeticError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    for p in res if isinstance(res, list) else [res]:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
