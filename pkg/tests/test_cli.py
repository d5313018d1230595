import csv
import json
import subprocess
import sys

import pytest

from divswitch.cli import main, read_config
from divswitch.solver import tag_from_witness

from conftest import CURATED


def params_flags(label):
    mu0, mu1, sigma, rho, g, lam = CURATED[label]
    return ["--mu0", str(mu0), "--mu1", str(mu1), "--sigma", str(sigma), "--rho", str(rho),
            "--g", str(g), "--lambda", str(lam)]


def run(args, out):
    code = main(args + ["--out", str(out)])
    return code, (json.loads((out / "result.json").read_text())
                  if (out / "result.json").exists() else None)


def test_classify_case_I(tmp_path):
    code, res = run(["classify"] + params_flags("I"), tmp_path)
    assert code == 0 and res["case"] == "I"
    assert res["witnesses"]["vhat0_at_compensation"] >= res["witnesses"]["mu1_over_rho"]
    assert tag_from_witness(res["witnesses"]) == res["case"]


def test_invalid_lambda(tmp_path, capsys):
    code = main(["classify", "--lambda", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "lambda in (0,1)" in capsys.readouterr().err


def test_missing_config_and_bad_key(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2
    cfg = tmp_path / "c.ini"
    cfg.write_text("mu0 = 0.5\nbogus = 1\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\nmu0 = 0.5\nmu1 = 1.0\nsigma = 1\nrho = 0.25\ng = 6 ; comment\n"
                   "lambda = 0.2\n")
    assert read_config(cfg)["g"] == "6"
    code, res = run(["classify", "--config", str(cfg)], tmp_path / "a")
    assert res["case"] == "I"
    code, res = run(["classify", "--config", str(cfg), "--lambda", "0.5", "--g", "2"],
                    tmp_path / "b")
    assert res["case"] == "II"
    assert res["config"]["params"]["lambda"] == 0.5


def test_solve_outputs(tmp_path):
    code, res = run(["solve"] + params_flags("II"), tmp_path)
    assert code == 0
    assert res["hjb_ok"] and res["hjb_residual"]["max_residual"] < res["hjb_tol"]
    rows = list(csv.DictReader((tmp_path / "values.csv").open()))
    first = rows[0]
    assert float(first["x"]) == 0.0
    assert float(first["v1"]) == pytest.approx(res["witnesses"]["vhat0_at_compensation"],
                                               abs=1e-12)
    assert len(first["v0"].replace("-", "").replace(".", "").split("e")[0]) >= 15 or \
        float(first["v0"]) == 0.0


def test_solve_fails_on_impossible_tolerance(tmp_path):
    code, _ = run(["solve", "--hjb-tol", "-1"] + params_flags("III-B_mixed"), tmp_path)
    assert code == 3


def test_simulate_verdicts(tmp_path):
    code, res = run(["simulate", "--seed", "3", "--x0", "1.5", "--n-paths", "20000"]
                    + params_flags("II"), tmp_path)
    assert code == 0
    assert res["dominates"] is False and res["attains"] is True


def test_simulate_requires_seed(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 2


def test_simulate_bad_seed(tmp_path):
    assert main(["simulate", "--seed", str(2 ** 64), "--out", str(tmp_path)]) == 2


def test_simulate_invalid_policy_exit_code(tmp_path):
    code, _ = run(["simulate", "--seed", "1", "--policy", "threshold", "--b0", "inf",
                   "--b1", "inf", "--s01", "2", "--s10", "inf", "--x0", "3"]
                  + params_flags("II"), tmp_path)
    assert code == 4


def test_pde_check(tmp_path):
    code, res = run(["pde-check", "--n", "1000"] + params_flags("I"), tmp_path)
    assert code == 0 and res["within_bound"]
    assert res["report"]["max_error"] <= res["error_bound"]


def test_sweep_contiguous(tmp_path):
    code, res = run(["sweep", "--mu0", "0.5", "--mu1", "1", "--sigma", "1", "--rho", "0.25",
                     "--axis-a", "lambda:0.1:0.9:9", "--axis-b", "g:1:6:6"], tmp_path)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "regime_map.csv").open()))
    assert len(rows) == 54
    assert list(rows[0]) == ["lambda", "g", "case_tag", "x01", "a", "x1"]
    # along each g column, case I occupies a block of small lambda
    for g in sorted({r["g"] for r in rows}):
        col = [r["case_tag"] == "I" for r in rows if r["g"] == g]
        k = col.index(False) if False in col else len(col)
        assert all(col[:k]) and not any(col[k:])


def test_entry_point_subprocess(tmp_path):
    out = subprocess.run([sys.executable, "-m", "divswitch.cli", "classify", "--out",
                          str(tmp_path)] + params_flags("III-A"),
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0, out.stderr
    assert "III-A" in out.stdout
