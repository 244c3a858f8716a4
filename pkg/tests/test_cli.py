import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from oracles import bisection

from compsolve.cli import apply_override, main
from compsolve.registry import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, command, config, out, *extra):
    if isinstance(config, dict):
        path = out.parent / f"{out.name}.json"
        path.write_text(json.dumps(config))
    else:
        path = CONFIGS / config
    code = main([command, "--input", str(path), "--out", str(out), *extra])
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1
    return code, json.loads(lines[0])


def test_certify_identity(capsys, tmp_path):
    code, s = run(capsys, "certify", "identity.json", tmp_path / "o")
    assert code == 0 and s["verdict"] == "PASS"
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["k"] == pytest.approx(1.0)
    assert all(v == pytest.approx(t, abs=1e-12) for t, v in rep["nu"])


def test_solve_sin(capsys, tmp_path):
    code, s = run(capsys, "solve", "sin.json", tmp_path / "o")
    assert code == 0 and s["outcome"] == "Converged"
    lines = (tmp_path / "o" / "trace.csv").read_text().splitlines()
    rows = list(csv.DictReader(lines[:-1]))
    assert float(rows[-1]["res_norm"]) <= 1e-10
    assert json.loads(lines[-1])["residual"] <= 1e-10
    ref = bisection(lambda x: x + 0.25 * np.sin(x) - 1.0, 0.0, 1.0)
    assert abs(s["x"][0] - ref) <= 1e-8


def test_solve_negation(capsys, tmp_path):
    code, s = run(capsys, "solve", "neg.json", tmp_path / "o")
    assert code == 2 and s["outcome"] == "NonContractive"


def test_fixed_point_and_patched(capsys, tmp_path):
    code, s = run(capsys, "fixed-point", "cos_fixed_point.json", tmp_path / "a")
    assert code == 0 and s["x"][0] == pytest.approx(0.4501836112948, abs=1e-8)
    code, s = run(capsys, "solve", "patched.json", tmp_path / "b")
    assert code == 0 and s["reanchors"] >= 2


def test_envelope_violation_exit_code(capsys, tmp_path):
    code, s = run(capsys, "elliptic", "elliptic_violation.json", tmp_path / "o")
    assert code == 2 and s["error"] == "CoefficientEnvelopeViolated"
    assert "witness" in s


def test_elliptic_writes_solution(capsys, tmp_path):
    code, s = run(capsys, "elliptic", "elliptic.json", tmp_path / "o")
    assert code == 0 and s["verdict"] == "PASS"
    rows = (tmp_path / "o" / "solution.csv").read_text().splitlines()
    assert rows[0] == "x,value" and len(rows) == 66
    code, s = run(capsys, "elliptic", "elliptic_2d.json", tmp_path / "p")
    assert code == 0 and s["max_abs_error"] <= 1e-8
    assert (tmp_path / "p" / "solution.csv").read_text().startswith("x,y,value\n")


def test_ns_commands(capsys, tmp_path):
    code, s = run(capsys, "ns-steady", "ns_steady.json", tmp_path / "a")
    assert code == 0 and s["conditions_passed"]
    assert (tmp_path / "a" / "solution.csv").read_text().startswith("i,j,coefficient\n")
    code, s = run(capsys, "ns-evolve", "ns_evolve.json", tmp_path / "b", "--set", "T=1.0")
    assert code == 0 and s["energy_ok"] and s["steps"] == 20


def sweep_rows(out):
    return list(csv.DictReader((out / "sweep.csv").read_text().splitlines()))


def test_sweep_identity_solves_everything(capsys, tmp_path):
    cfg = {"type": "sweep", "operator": {"name": "identity", "dim": 2}, "radii": [1, 2, 4],
           "target_fractions": [0.25, 0.5, 1.0], "solver": {"radius_guard": False}}
    code, s = run(capsys, "sweep", cfg, tmp_path / "o")
    rows = sweep_rows(tmp_path / "o")
    assert code == 0 and len(rows) == 9
    assert all(r["outcome"] == "Converged" for r in rows)


def test_sweep_negation_all_non_contractive(capsys, tmp_path):
    cfg = {"type": "sweep", "operator": {"name": "negation"}, "radii": [1, 2, 4], "ynorms": [0.1, 0.5]}
    code, s = run(capsys, "sweep", cfg, tmp_path / "o")
    assert code == 2 and s["outcome"] == "NonContractive"
    assert all(r["outcome"] == "NonContractive" for r in sweep_rows(tmp_path / "o"))


def test_sweep_sin_rows_match_oracle(capsys, tmp_path):
    code, _ = run(capsys, "sweep", "sweep.json", tmp_path / "o", "--set", "radii=[1.0, 2.0]")
    rows = sweep_rows(tmp_path / "o")
    assert code == 0 and list(rows[0]) == ["r", "ynorm", "sigma", "delta0", "outcome"]
    for r in rows:
        if r["outcome"] == "Converged":
            # per-row oracle re-solve of x + 0.25 sin x = +-ynorm inside the ball
            y = float(r["ynorm"])
            root = bisection(lambda x: x + 0.25 * np.sin(x) - y, 0.0, y)
            assert abs(root) <= float(r["r"])
        else:
            assert r["outcome"] == "OutsideRadius"
            assert float(r["ynorm"]) > 0.99 * (1 - float(r["sigma"])) * float(r["r"])


def test_config_parse_error(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "operator": {"name": "identity",}\n}\n')
    code = main(["certify", "--input", str(bad), "--out", str(tmp_path / "o")])
    s = json.loads(capsys.readouterr().out)
    assert code == 3 and s["error"] == "ConfigParse"
    assert s["line"] == 2 and s["column"] > 1


@pytest.mark.parametrize("args", [
    ["certify", "--input", "/nonexistent/file.json"],
    ["solve", "--input", str(CONFIGS / "sin.json"), "--set", "operator.name=banana"],
    ["solve", "--input", str(CONFIGS / "sin.json"), "--set", "noequals"],
    ["elliptic", "--input", str(CONFIGS / "sin.json")],
    ["solve", "--input", str(CONFIGS / "sin.json"), "--set", "solver.tol=-1"],
])
def test_config_errors_exit_3(capsys, tmp_path, args):
    code = main(args + ["--out", str(tmp_path / "o")])
    s = json.loads(capsys.readouterr().out)
    assert code == 3 and "error" in s


def test_usage_error_exit_3(capsys):
    assert main(["frobnicate", "--input", "x"]) == 3


def test_override_parsing():
    cfg = {"solver": {"tol": 1e-10}}
    apply_override(cfg, "solver.tol=1e-12")
    apply_override(cfg, "operator.name=sin-perturbed")
    apply_override(cfg, "radii=[1, 2]")
    assert cfg == {"solver": {"tol": 1e-12}, "operator": {"name": "sin-perturbed"}, "radii": [1, 2]}
    with pytest.raises(ConfigError):
        apply_override(cfg, "solver.tol.x=1")


def test_determinism(capsys, tmp_path):
    for name in ("a", "b"):
        run(capsys, "solve", "sin.json", tmp_path / name, "--seed", "5",
            "--set", "certify=true")
    for f in ("report.json", "trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "compsolve", "solve", "--input", str(CONFIGS / "neg.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["outcome"] == "NonContractive"
