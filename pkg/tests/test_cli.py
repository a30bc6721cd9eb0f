import csv
import hashlib
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from optorecon.cli import ConfigError, main, parse_config, run_scenario

SINGLE = """
[scenario]
name = reconstruct-sweep
seed = 11

[network]
kind = single
omega_m = 1.0

[state]
kind = thermal
nbar = 1.0

[plan]
thetas_over_pi = 0, 0.25, -0.25, 0.5
beta_mag = 5
n_samples = 50, 500
trials = 6
"""

TWO_MODE = """
[scenario]
name = design-profile
seed = 3

[network]
kind = two_mode
omega = 2.0
J = 0.7
K = 0.7

[state]
kind = two_mode_squeezed_thermal
nbar = 1.5
r = 0.2

[plan]
pairs_over_pi = -0.5 -0.5; 0 0; 0 -0.5; -0.5 0; -0.75 -0.75; -0.25 -0.25
taus = 5, 15, 4, 25, 25, 4
beta_mag = 1
n_samples = 200
trials = 4
profile_samples = 64
"""

PHOTON = """
[scenario]
name = singlephoton-scan
seed = 5

[singlephoton]
g0 = 0.5
alpha = 1.0
state = coherent
gamma = 0.7+0.3j
points = 16
shots = 10000
"""


@pytest.fixture
def cfg_file(tmp_path):
    def write(text, name="run.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_and_hash():
    cfg = parse_config(SINGLE)
    assert cfg.plan.n_samples == (50, 500) and cfg.seed == 11
    assert cfg.digest() == parse_config(SINGLE).digest()
    assert replace(cfg, workers=4).digest() == cfg.digest()
    assert replace(cfg, seed=12).digest() != cfg.digest()
    two = parse_config(TWO_MODE)
    assert two.plan.pairs_over_pi[4] == (-0.75, -0.75)
    assert parse_config(PHOTON).singlephoton.gamma == 0.7 + 0.3j


@pytest.mark.parametrize("text,msg", [
    ("[plan]\ntrials = 3\n", "scenario"),
    ("[scenario]\nname = reconstruct-sweep\n", "seed"),
    ("[scenario]\nname = fly\nseed = 1\n", "unknown scenario"),
    (SINGLE + "\n[extra]\nx = 1\n", "unknown section"),
    (SINGLE.replace("trials = 6", "trials = 6\ntrails = 2"), "unknown key"),
    (SINGLE.replace("n_samples = 50, 500", "epsilons = 0, 1.0"), "epsilon"),
    (SINGLE.replace("nbar = 1.0", "nbar = -0.9"), "nbar"),
    (TWO_MODE.replace("omega = 2.0", "omega = 1.0").replace("K = 0.7", "K = 1.2"), "network: "),
    (SINGLE.replace("beta_mag = 5", "beta_mag = five"), "beta_mag"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_validate_config_verb(cfg_file, capsys):
    assert main(["validate-config", "--config", cfg_file(TWO_MODE)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok: scenario=design-profile seed=3")
    assert "normal-mode frequencies" in out
    assert main(["validate-config", "--config", cfg_file("[scenario]\nname = x\n")]) == 2
    assert main(["validate-config", "--config", "/nonexistent.ini"]) == 2


def test_reconstruct_sweep_replay(cfg_file, tmp_path):
    path = cfg_file(SINGLE)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["reconstruct-sweep", "--config", path, "--out", str(a)]) == 0
    assert main(["reconstruct-sweep", "--config", path, "--out", str(b)]) == 0
    assert main(["reconstruct-sweep", "--config", path, "--out", str(c), "--workers", "2"]) == 0
    ref = (a / "fidelity.csv").read_bytes()
    assert (b / "fidelity.csv").read_bytes() == ref
    assert (c / "fidelity.csv").read_bytes() == ref
    assert (a / "manifest.json").read_bytes() == (c / "manifest.json").read_bytes()
    rows = read_csv(a / "fidelity.csv")
    assert rows[0] == ["n_samples", "epsilon", "mean_fidelity", "std_fidelity", "trials", "unphysical"]
    assert [int(r[0]) for r in rows[1:]] == [50, 500]
    assert all(0 <= float(r[2]) <= 1 for r in rows[1:])
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 11
    assert man["config_sha256"] == parse_config(SINGLE).digest()
    assert man["files"]["fidelity.csv"] == hashlib.sha256(ref).hexdigest()


def test_seed_override_changes_output(cfg_file, tmp_path):
    path = cfg_file(SINGLE)
    assert main(["reconstruct-sweep", "--config", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["reconstruct-sweep", "--config", path, "--out", str(tmp_path / "b"), "--seed", "99"]) == 0
    assert (tmp_path / "a" / "fidelity.csv").read_bytes() != (tmp_path / "b" / "fidelity.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 99


def test_loss_sweep(cfg_file, tmp_path):
    out = tmp_path / "loss"
    assert main(["loss-sweep", "--config", cfg_file(SINGLE.replace("beta_mag = 5", "beta_mag = 0.5")),
                 "--out", str(out)]) == 0
    rows = read_csv(out / "loss.csv")[1:]
    assert sorted({float(r[1]) for r in rows}) == [0.0, 0.4, 0.8]
    assert len(rows) == 6


def test_design_profile_two_mode(cfg_file, tmp_path):
    out = tmp_path / "prof"
    assert main(["design-profile", "--config", cfg_file(TWO_MODE), "--out", str(out)]) == 0
    rows = read_csv(out / "profiles.csv")
    assert rows[0] == ["setting", "config", "theta_1", "theta_2", "beta_mag_1", "beta_mag_2",
                       "psi", "tau", "peak_g", "file"]
    # six pairs, three |beta| scalings each
    assert len(rows) == 19
    assert all(abs(float(r[6])) <= 1e-8 for r in rows[1:])
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["files"]) == 19
    first = read_csv(out / rows[1][-1])
    assert len(first) == 65


def test_infeasible_design_reports_context(cfg_file, tmp_path, capsys):
    text = TWO_MODE.replace("taus = 5, 15, 4, 25, 25, 4", "taus = 5, 15, 3, 25, 25, 3")
    assert main(["design-profile", "--config", cfg_file(text), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "design-profile failed" in err and "thetas=" in err


def test_singlephoton_scan(cfg_file, tmp_path):
    out = tmp_path / "sp"
    assert main(["singlephoton-scan", "--config", cfg_file(PHOTON), "--out", str(out)]) == 0
    rows = read_csv(out / "ring.csv")
    assert rows[0] == ["tau", "re_beta", "im_beta", "psi", "re_chi", "im_chi"]
    assert len(rows) == 17
    again = tmp_path / "sp2"
    run_scenario(parse_config(PHOTON), again)
    assert (again / "ring.csv").read_bytes() == (out / "ring.csv").read_bytes()


def test_module_entry_point(cfg_file):
    res = subprocess.run([sys.executable, "-m", "optorecon", "validate-config", "--config", cfg_file(PHOTON)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ok:")


def test_readme_config_example_parses():
    from pathlib import Path
    text = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = text.split("```ini", 1)[1].split("```", 1)[0]
    cfg = parse_config(block)
    assert cfg.network.kind == "two_mode" and cfg.plan.taus == (5, 15, 4, 25, 25, 4)
    assert len(cfg.plan.pairs_over_pi) == 6
