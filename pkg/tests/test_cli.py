from __future__ import annotations

import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from jumpresponse.cli import EXIT_CONFIG, EXIT_OK, main

CONFIGS = Path(__file__).parent.parent / "configs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_OK, err
    return json.loads(out)


def test_lr_exact_two_state(capsys):
    doc = run_json(capsys, "lr", "exact", "--config", CONFIGS / "two_state.json")
    assert doc["value"] == pytest.approx(-(2 / 9) * (1 - math.exp(-3)), abs=1e-9)
    assert doc["method"] == "stationary correlation"


def test_lr_exact_from_a_point_uses_sensitivity(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "two_state.json").read_text())
    cfg["initial"] = 0
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    doc = run_json(capsys, "lr", "exact", "--config", path)
    assert doc["method"] == "sensitivity equations"


def test_lr_mc_is_deterministic(capsys):
    argv = ("lr", "mc", "--config", CONFIGS / "two_state.json", "--paths", 3000, "--seed", 17)
    a = run(capsys, *argv)[1]
    b = run(capsys, *argv, "--workers", 2)[1]
    assert a == b
    doc = json.loads(a)
    assert doc["seed"] == 17 and doc["n"] == 3000
    assert abs(doc["value"] + 0.2111584) < 5 * doc["stderr"]


def test_lr_fd(capsys):
    doc = run_json(capsys, "lr", "fd", "--config", CONFIGS / "two_state.json", "--paths", 3000)
    assert doc["estimator"] == "girsanov-fd" and doc["lambda_step"] == 1e-3


def test_mobility_csv(tmp_path, capsys):
    out = tmp_path / "mob.json"
    run_json(capsys, "mobility", "--config", CONFIGS / "two_periodic.json", "--omega-grid",
             "0.5,1,10", "--out", out)
    rows = list(csv.DictReader(open(tmp_path / "mob.csv")))
    assert len(rows) == 3
    row = next(r for r in rows if float(r["omega"]) == 1.0)
    assert float(row["re"]) == pytest.approx(12 / 7 * 1.65, abs=1e-10)
    assert float(row["im"]) == pytest.approx(12 / 7 * 0.05, abs=1e-10)
    saved = json.loads(out.read_text())
    assert saved["N"] == 8 and len(saved["results"]) == 3


def test_model_describe_and_build(capsys):
    doc = run_json(capsys, "model", "describe", "--config", CONFIGS / "two_state.json")
    assert doc["n"] == 2 and doc["irreducible"] and doc["spectrum_ok"]
    assert doc["spectral_gap"]["kappa"] == pytest.approx(3.0, rel=1e-6)
    canon = run_json(capsys, "model", "build", "--config", CONFIGS / "two_state.json")
    assert canon["model"] == {"kind": "two_state", "a": 2.0, "b": 1.0}


def test_simulate_with_dump(tmp_path, capsys):
    dump = tmp_path / "paths.jsonl"
    doc = run_json(capsys, "simulate", "--config", CONFIGS / "two_state_cosine.json", "--paths",
                   50, "--lambda", 0.2, "--dump", dump)
    assert doc["paths"] == 50 and doc["truncated"] == 0
    assert len(dump.read_text().splitlines()) == 50


def test_oss(capsys):
    doc = run_json(capsys, "oss", "--config", CONFIGS / "two_state_cosine.json", "--slices", 4,
                   "--lambda", 0.01)
    assert doc["period"] == pytest.approx(2 * math.pi)
    assert len(doc["a_t"]) == 4
    c1 = doc["fourier_response"]["1"]
    assert c1["re"] == pytest.approx(-0.1, abs=1e-10)
    assert c1["im"] == pytest.approx(1 / 30, abs=1e-10)


def test_check_birth_death(capsys):
    doc = run_json(capsys, "check", "--config", CONFIGS / "birth_death.json", "--paths", 500,
                   "--theta-grid", "0.25")
    assert doc["birth_death"]["conditions"]["verdict"] == "holds-empirically"
    assert doc["birth_death"]["Z_partial"] == pytest.approx(2.0)
    assert doc["lyapunov_constant_U"]["passed"]
    assert doc["truncated_verdicts"] is True


def test_config_errors_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "lr", "exact", "--config", tmp_path / "missing.json")
    assert code == EXIT_CONFIG and "config error" in err
    code, _, err = run(capsys, "mobility", "--config", CONFIGS / "two_state.json")
    assert code == EXIT_CONFIG and "torus" in err
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps({"model": {"kind": "two_state", "a": 1, "b": 1}}))
    code, _, err = run(capsys, "lr", "exact", "--config", bare)
    assert code == EXIT_CONFIG and "perturbation" in err
    code, _, err = run(capsys, "mobility", "--config", CONFIGS / "two_periodic.json",
                       "--omega-grid", "a,b")
    assert code == EXIT_CONFIG and "--omega-grid" in err


def test_validate_single_criterion(tmp_path, capsys):
    out = tmp_path / "v.json"
    code, text, _ = run(capsys, "validate", "--criteria", "1", "--out", out)
    assert code == EXIT_OK
    assert "[PASS] criterion 1" in text
    assert json.loads(out.read_text())[0]["number"] == 1


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "jumpresponse.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "mobility" in res.stdout


def test_mobility_range_grid(capsys):
    doc = run_json(capsys, "mobility", "--config", CONFIGS / "two_periodic.json",
                   "--omega-grid", "0.5:10:5")
    assert [r["omega"] for r in doc["results"]] == pytest.approx([0.5, 2.875, 5.25, 7.625, 10.0])
    code, _, err = run(capsys, "mobility", "--config", CONFIGS / "two_periodic.json",
                       "--omega-grid", "1:2")
    assert code == EXIT_CONFIG and "a:b:steps" in err
