import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from mginf import config as cfgmod
from mginf.cli import main, parse_header

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = Path(__file__).parent / "data"


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


BASE = {"law": {"type": "exponential", "rate": 1.0}, "lambda": 1.0, "t_grid": [1.0]}


def test_fluid_output(tmp_path, capsys):
    assert main(["fluid", "--config", write(tmp_path, BASE)]) == 0
    out = capsys.readouterr().out
    assert "1,0.632120559,0.367879441,0.632120559" in out
    row = out.splitlines()[-1].split(",")
    assert round(float(row[1]), 6) == 0.632121


def test_header_round_trip(tmp_path, capsys):
    path = str(CONFIGS / "mm_inf_canonical.json")
    assert main(["fluid", "--config", path]) == 0
    h = parse_header(capsys.readouterr().out)
    cfg = cfgmod.load(path)
    assert h["config"] == {k: v for k, v in cfg.items() if k != "output"}
    assert h["config_sha256"] == cfgmod.digest(h["config"])
    assert h["seed"] == "20081218"
    # the recovered config is itself a valid config that reproduces the run
    p2 = write(tmp_path, h["config"])
    assert main(["fluid", "--config", p2]) == 0
    assert parse_header(capsys.readouterr().out)["config_sha256"] == h["config_sha256"]


def test_output_section_does_not_change_hash(tmp_path, capsys):
    main(["fluid", "--config", write(tmp_path, BASE)])
    a = parse_header(capsys.readouterr().out)["config_sha256"]
    main(["fluid", "--config", write(tmp_path, {**BASE, "output": {"formats": ["csv"]}}, "d.json")])
    assert parse_header(capsys.readouterr().out)["config_sha256"] == a


def test_seed_override_and_json(tmp_path, capsys):
    assert main(["fluid", "--config", write(tmp_path, BASE), "--seed", "5", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["header"]["seed"] == 5
    assert doc["rows"][0]["X_star"] == pytest.approx(0.6321205588285577)


def test_out_dir(tmp_path):
    out = tmp_path / "res"
    assert main(["fluid", "--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    assert (out / "fluid.csv").read_text().splitlines()[-1] == "1,0.632120559,0.367879441,0.632120559"


def test_simulate_and_diffusion_run(tmp_path, capsys):
    cfg = {**BASE, "n_values": [20], "R": 10, "diffusion": {"K": 8, "steps": 32, "R": 20}}
    assert main(["simulate", "--config", write(tmp_path, cfg)]) == 0
    assert "n,t,functional" in capsys.readouterr().out
    assert main(["diffusion", "--config", write(tmp_path, cfg)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert lines[0] == "t,functional,variance_exact,variance_series_K8,q05,q50,q95"
    assert lines[1].startswith("1,X,0.632120559,")


def test_mixture_explore_config_runs(capsys):
    assert main(["diffusion", "--config", str(CONFIGS / "uniform_mixture_explore.json")]) == 0


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert ",false," not in out
    assert out.count(",true,") == 14


def test_config_error_exit_codes(tmp_path, capsys):
    assert main(["fluid", "--config", write(tmp_path, {**BASE, "bogus": 1})]) == 2
    assert main(["fluid", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["fluid"]) == 2
    assert main(["fluid", "--config", write(tmp_path, BASE), "--seed", "-1"]) == 2
    assert main(["fluid", "--config", write(tmp_path, {**BASE, "t_grid": [2.0, 1.0]})]) == 2
    bad_mix = {**BASE, "law": {"type": "mixture", "components": [
        {"weight": 0.3, "law": {"type": "exponential", "rate": 1.0}}]}}
    assert main(["fluid", "--config", write(tmp_path, bad_mix)]) == 2
    assert "config error" in capsys.readouterr().err


def test_numerical_exit_code(tmp_path, capsys):
    cfg = {**BASE, "law": {"type": "deterministic", "d": 1.0}, "diffusion": {"K": 4, "steps": 8, "R": 4}}
    assert main(["diffusion", "--config", write(tmp_path, cfg)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_acceptance_exit_code(tmp_path, capsys):
    cfg = {**BASE, "n_values": [2], "R": 500, "functionals": ["X"], "master_seed": 1}
    assert main(["validate-clt", "--config", write(tmp_path, cfg)]) == 4


def test_validate_clt_matches_reference(capsys):
    assert main(["validate-clt", "--config", str(CONFIGS / "clt_acceptance.json")]) == 0
    assert capsys.readouterr().out == (DATA / "validate_clt_reference.csv").read_text()


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mginf.cli", "fluid", "--config", write(tmp_path, BASE)],
                       capture_output=True, text=True, env={**os.environ, "MGINF_WORKERS": "1"})
    assert r.returncode == 0
    assert r.stdout.endswith("1,0.632120559,0.367879441,0.632120559\n")
