import json

import numpy as np
import pytest

from lognormal_qmc.cli import main
from lognormal_qmc.wavelet import read_parameters

SMALL_CFG = """\
beta1 = 6
theta = 2.25
ell0 = 1
L = 3
n_elements = 32
n_list = 31, 61, 127, 251
R = 8
n_ref = 2039
R_ref = 4
"""
HAAR4_CFG = "beta1 = 4\ntheta = 1.2\nell0 = 0\nL = 5\nn_elements = 64\n"


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CFG)
    return str(path)


@pytest.fixture
def haar4(tmp_path):
    path = tmp_path / "haar4.cfg"
    path.write_text(HAAR4_CFG)
    return str(path)


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_cbc_with_weight_file(tmp_path, capsys):
    w = tmp_path / "w.txt"
    w.write_text("1.0 0.25 0.111111")
    assert main(["cbc", "--n", "31", "--weights", str(w)]) == 0
    out = _json(capsys)
    assert out["s"] == 3 and len(out["z"]) == 3 and out["z"][0] == 1
    assert main(["cbc", "--n", "31", "--weights", str(w), "--slow", "--s", "2"]) == 0
    assert _json(capsys)["z"] == out["z"][:2]


def test_cbc_from_config(cfg, tmp_path):
    out = tmp_path / "z.json"
    assert main(["cbc", "--n", "61", "--config", cfg, "--output", str(out)]) == 0
    assert json.loads(out.read_text())["s"] == 14


def test_weights(cfg, capsys):
    assert main(["weights", "--config", cfg]) == 0
    out = _json(capsys)
    assert out["qmc_ready"] is True and len(out["gamma"]) == 14
    assert set(out["log10_error_bound"]) == {"31", "61", "127", "251"}


def test_sample_and_solve(haar4, tmp_path, capsys):
    y, snap = tmp_path / "y.bin", tmp_path / "snap.csv"
    assert main(["sample", "--config", haar4, "--seed", "3", "--output", str(y), "--snapshot", str(snap),
                 "--resolution", "16"]) == 0
    capsys.readouterr()
    assert read_parameters(y).size == 63
    assert snap.read_text().startswith("x,T\n")
    nodal = tmp_path / "u.csv"
    assert main(["solve", "--config", haar4, "--y", str(y), "--output", str(nodal)]) == 0
    out = _json(capsys)
    assert out["residual"] <= 1e-12 and out["G"] > 0
    rows = nodal.read_text().splitlines()
    assert rows[0] == "x,u" and len(rows) == 1 + 65


def test_check_commands(haar4, capsys):
    assert main(["check-derivative", "--config", haar4, "--seed", "1", "--j", "0", "3"]) == 0
    rep = _json(capsys)
    assert rep["passed"] and rep["fd_norm"] <= rep["bound"]
    assert main(["check-strang", "--config", haar4, "--seed", "1", "--L-small", "2"]) == 0
    assert _json(capsys)["passed"]


def test_converge_and_mc(cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["converge", "--config", cfg, "--output", str(out), "--mc"]) == 0
    summary = _json(capsys)
    assert "mc_fit" in summary and np.isfinite(summary["fit"]["slope"])
    assert {p.name for p in out.iterdir()} == {"shifts.csv", "summary.json", "timing.json"}
    assert main(["mc", "--config", cfg]) == 0
    assert len(_json(capsys)["per_n"]) == 4


def test_truncate(haar4, capsys):
    assert main(["truncate", "--config", haar4, "--L", "1", "2", "3", "--samples", "50"]) == 0
    out = _json(capsys)
    assert len(out["mean_gap"]) == 3


def test_bench(capsys):
    assert main(["bench-cbc", "--n", "127", "257", "--s", "4", "--repeats", "1"]) == 0
    out = _json(capsys)
    assert len(out["rows"]) == 2 and "n_exponent" in out


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("R = 2\n")
    assert main(["converge", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["solve", "--y", str(tmp_path / "missing.bin")]) == 2
