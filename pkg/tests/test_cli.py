import json
import math
from pathlib import Path

import numpy as np
import pytest

from bcdpet import cli
from bcdpet.config import ConfigError, SweepConfig, load_config, parse_config
from bcdpet.denoiser import load_model
from bcdpet.fileio import read_array, write_array

ROOT = Path(__file__).resolve().parents[1]

TINY = """
schema_version = 1
seed = 3
[geometry]
n_x = 24
n_y = 24
n_angles = 30
[train]
total_net_trues = 4e3
random_fraction = 0.5
n_realizations = 2
[test]
total_net_trues = 8e3
random_fraction = 0.5
n_realizations = 3
[denoiser]
K = 4
R = 9
[denoiser.train]
epochs = 5
learning_rate = 0.03
[recon]
T = 2
c = 0.3
n_em = 12
[recon.tv]
n_iter = 15
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


def run(*args):
    return cli.main([str(a) for a in args])


def pipeline(cfg_path, out):
    assert run("simulate", "--config", cfg_path, "--out", out) == 0
    assert run("train", "--config", cfg_path, "--out", out) == 0
    assert run("reconstruct", "--config", cfg_path, "--out", out, "--model", out / "model.cidm",
               "--save-every", "1") == 0
    assert run("reconstruct", "--config", cfg_path, "--out", out, "--algorithm", "em") == 0
    assert run("evaluate", "--config", cfg_path, "--out", out,
               out / "recon/bcdnet/manifest.json", out / "recon/em/manifest.json") == 0


# -- configuration --------------------------------------------------------------

def test_table1_config_values():
    cfg = load_config(ROOT / "configs" / "table1.toml")
    assert (cfg.train.hot_ratio, cfg.train.total_net_trues, cfg.train.random_fraction) == (9.0, 2e5, 0.909)
    assert (cfg.test.hot_ratio, cfg.test.total_net_trues, cfg.test.random_fraction) == (4.0, 5e5, 0.875)
    assert cfg.train.n_realizations == cfg.test.n_realizations == 5
    assert (cfg.recon.T, cfg.K, cfg.R) == (30, 78, 9)


def test_default_beta_grid():
    grid = SweepConfig().betas()
    assert len(grid) == 31 and grid[0] == 2.0 ** -15 and grid[-1] == 2.0 ** 15


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {"bogus": 1},
    {"recon": {"T": 0}},
    {"recon": {"tv": {"nope": 1}}},
    {"train": {"phantom": "xcat"}},
    {"train": {"random_fraction": 1.2}},
    {"denoiser": {"K": 4, "L": 2}},
    {"sweep": {"algorithm": "osem"}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("schema_version = 1\n[recon]\nT = -1\n")
    assert run("simulate", "--config", p, "--out", tmp_path) == cli.EXIT_CONFIG
    p.write_text("not toml [")
    assert run("simulate", "--config", p, "--out", tmp_path) == cli.EXIT_CONFIG


# -- simulate -------------------------------------------------------------------

def test_simulate_manifest_and_determinism(cfg_path, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("simulate", "--config", cfg_path, "--out", a) == 0
    assert run("simulate", "--config", cfg_path, "--out", b) == 0
    assert run("simulate", "--config", cfg_path, "--out", c, "--seed", 4) == 0
    man = json.loads((a / "test/manifest.json").read_text())
    assert len(man["measurements"]) == 3 and man["settings"]["total_net_trues"] == 8e3
    assert cli.verify_manifest(a / "test/manifest.json") == []
    for f in sorted((a / "test").glob("*.img")):
        assert f.read_bytes() == (b / "test" / f.name).read_bytes()
    y = "test/meas_000_y.img"
    assert (a / y).read_bytes() != (c / y).read_bytes()


def test_single_realization(tmp_path):
    p = tmp_path / "one.toml"
    p.write_text(TINY.replace("n_realizations = 3", "n_realizations = 1"))
    assert run("simulate", "--config", p, "--out", tmp_path, "--scenario", "test") == 0
    assert len(list((tmp_path / "test").glob("meas_*_y.img"))) == 1


def test_corrupted_artifact_is_runtime_error(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path) == 0
    f = tmp_path / "test/meas_001_y.img"
    buf = bytearray(f.read_bytes())
    buf[40] ^= 1
    f.write_bytes(bytes(buf))
    assert cli.verify_manifest(tmp_path / "test/manifest.json") == ["checksum mismatch meas_001_y.img"]
    assert run("reconstruct", "--config", cfg_path, "--out", tmp_path, "--algorithm", "em") == cli.EXIT_RUNTIME


# -- train / reconstruct --------------------------------------------------------

def test_single_stage_model_usable(cfg_path, tmp_path):
    p = tmp_path / "t1.toml"
    p.write_text(TINY.replace("T = 2", "T = 1"))
    assert run("simulate", "--config", p, "--out", tmp_path) == 0
    assert run("train", "--config", p, "--out", tmp_path) == 0
    assert load_model(tmp_path / "model.cidm").T == 1
    assert run("reconstruct", "--config", p, "--out", tmp_path, "--model", tmp_path / "model.cidm") == 0
    rows = (tmp_path / "train_loss.csv").read_text().splitlines()[1:]
    losses = [float(r.split(",")[2]) for r in rows]
    assert all(math.isfinite(v) for v in losses) and losses[-1] <= losses[0]


def test_train_needs_truth(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path) == 0
    man_p = tmp_path / "train/manifest.json"
    man = json.loads(man_p.read_text())
    del man["files"]["truth"]
    man_p.write_text(json.dumps(man))
    assert run("train", "--config", cfg_path, "--out", tmp_path) == cli.EXIT_RUNTIME


def test_em_trace_monotone(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    assert run("reconstruct", "--config", cfg_path, "--out", tmp_path, "--algorithm", "em") == 0
    lines = (tmp_path / "recon/em/trace_r000.csv").read_text().splitlines()
    assert lines[0] == "iteration,nll,objective,beta,rmse,cnr,noise"
    nll = [float(l.split(",")[1]) for l in lines[1:]]
    assert len(nll) == 13 and all(b <= a + 1e-9 * abs(a) for a, b in zip(nll, nll[1:]))


def test_reconstruct_usage_errors(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    assert run("reconstruct", "--config", cfg_path, "--out", tmp_path, "--algorithm", "osem") == cli.EXIT_CONFIG
    assert run("reconstruct", "--config", cfg_path, "--out", tmp_path) == cli.EXIT_CONFIG  # no model
    other = tmp_path / "other.toml"
    other.write_text(TINY.replace("n_angles = 30", "n_angles = 31"))
    assert run("reconstruct", "--config", other, "--out", tmp_path, "--algorithm", "em") == cli.EXIT_CONFIG


# -- evaluate -------------------------------------------------------------------

def _truth_recon_manifest(out):
    d = out / "recon/truth"
    d.mkdir(parents=True)
    truth = read_array(out / "test/truth.img")
    p = write_array(d / "t.img", truth)
    man = {"kind": "reconstruction", "algorithm": "truth", "scenario": "test",
           "data_manifest": "../../test/manifest.json",
           "geometry": json.loads((out / "test/manifest.json").read_text())["geometry"],
           "images": [{"realization": 0, "iteration": 0, "image": cli._file_entry(d, p)}]}
    (d / "manifest.json").write_text(json.dumps(man))
    return d / "manifest.json"


def test_evaluate_truth_against_itself(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    rm = _truth_recon_manifest(tmp_path)
    assert run("evaluate", "--config", cfg_path, "--out", tmp_path, rm) == 0
    head, row = (tmp_path / "metrics.csv").read_text().splitlines()
    d = dict(zip(head.split(","), row.split(",")))
    assert float(d["rmse"]) == 0.0 and float(d["fov_bias"]) == 0.0
    assert d["noise"] == "nan"
    meta = json.loads((tmp_path / "metrics.json").read_text())
    assert meta["conventions"]["rmse"].startswith("raw activity")


def test_evaluate_noise_and_missing_liver_mask(cfg_path, tmp_path, caplog):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    assert run("reconstruct", "--config", cfg_path, "--out", tmp_path, "--algorithm", "em") == 0
    rm = tmp_path / "recon/em/manifest.json"
    assert run("evaluate", "--config", cfg_path, "--out", tmp_path, rm) == 0
    rows = (tmp_path / "metrics.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 and all(float(r.split(",")[-1]) > 0 for r in rows)
    dm = tmp_path / "test/manifest.json"
    man = json.loads(dm.read_text())
    del man["files"]["mask_background"]
    dm.write_text(json.dumps(man))
    with caplog.at_level("WARNING", logger="bcdpet"):
        assert run("evaluate", "--config", cfg_path, "--out", tmp_path, rm) == 0
    assert "no background" in caplog.text
    head, *rows = (tmp_path / "metrics.csv").read_text().splitlines()
    d = dict(zip(head.split(","), rows[0].split(",")))
    assert d["noise"] == "nan" and float(d["rmse"]) > 0


# -- sweep ----------------------------------------------------------------------

def test_sweep_single_point_matches_reconstruct(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    assert run("sweep-beta", "--config", cfg_path, "--out", tmp_path, "--grid", "0.5") == 0
    _, row = (tmp_path / "sweep_tv_pdhg.csv").read_text().splitlines()
    p = tmp_path / "one.toml"
    p.write_text(TINY.replace("[recon.tv]", "[recon.tv]\nbeta = 0.5"))
    assert run("reconstruct", "--config", p, "--out", tmp_path, "--algorithm", "tv_pdhg",
               "--realization", 0) == 0
    assert run("evaluate", "--config", p, "--out", tmp_path,
               tmp_path / "recon/tv_pdhg/manifest.json") == 0
    _, mrow = (tmp_path / "metrics.csv").read_text().splitlines()
    assert float(row.split(",")[1]) == float(mrow.split(",")[4])


def test_sweep_empty_grid(cfg_path, tmp_path):
    assert run("simulate", "--config", cfg_path, "--out", tmp_path, "--scenario", "test") == 0
    assert run("sweep-beta", "--config", cfg_path, "--out", tmp_path, "--grid", "") == cli.EXIT_CONFIG


def test_sweep_interior_minimum(tmp_path):
    cfg = ROOT / "configs" / "quick.toml"
    assert run("simulate", "--config", cfg, "--out", tmp_path, "--scenario", "test") == 0
    grid = ",".join(str(2.0 ** k) for k in range(-15, 16, 2))
    assert run("sweep-beta", "--config", cfg, "--out", tmp_path, "--grid", grid) == 0
    rmse = [float(r.split(",")[1]) for r in
            (tmp_path / "sweep_tv_pdhg.csv").read_text().splitlines()[1:]]
    k = int(np.argmin(rmse))
    assert 0 < k < len(rmse) - 1


# -- determinism ----------------------------------------------------------------

def test_pipeline_rerun_is_byte_identical(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(cfg_path, a)
    pipeline(cfg_path, b)
    csvs = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert len(csvs) >= 8
    for rel in csvs:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    assert (a / "model.cidm").read_bytes() == (b / "model.cidm").read_bytes()
