import json
import subprocess
import sys
from pathlib import Path

import pytest

from mobilesensor.cli import run
from mobilesensor.serialize import csv_text, dumps

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_design_reports_quartic(tmp_path, capsys):
    assert run(["design", "--config", str(CONFIGS / "design.json")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert abs(rec["sensitivity"] - 0.00390625) <= 1e-6
    assert len(rec["schedule"]["switch_times"]) == 4
    assert max(abs(r) for r in rec["residues"]) <= rec["threshold"]


def test_design_verify_round_trip(tmp_path, capsys):
    out = tmp_path / "design_out.json"
    assert run(["design", "--config", str(CONFIGS / "design.json"), "--out", str(out)]) == 0
    cfg = json.loads((CONFIGS / "verify.json").read_text())
    cfg["schedule_file"] = "design_out.json"
    assert run(["verify", "--config", _write(tmp_path, "verify.json", cfg)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["passes"] and rec["max_residue"] <= rec["threshold"]


def test_verify_failure_exit_code(tmp_path, capsys):
    cfg = {"noise": ["1"], "path": {"coords": ["t"], "T": 1.0},
           "schedule": {"T": 1.0, "initial_sign": 1, "switch_times": []}}
    assert run(["verify", "--config", _write(tmp_path, "v.json", cfg)]) == 2
    assert json.loads(capsys.readouterr().out)["passes"] is False


def test_qfi_spatial_frequency(capsys):
    assert run(["qfi", "--config", str(CONFIGS / "qfi.json")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["bound"] == 16
    assert abs(rec["quadrature_bound"] - 16) <= 1e-12


@pytest.mark.parametrize(
    "spec, expected",
    [
        ({"kind": "fast_relocation", "B": 1, "T": 2, "L": 3}, 144.0),
        ({"kind": "accelerated", "B": 1, "v0": 1, "a": 0, "T": 1}, 1.0),
        ({"kind": "velocity_schedule", "velocity": "2", "B": 1, "T": 1}, 4.0),
    ],
)
def test_qfi_kinds(tmp_path, capsys, spec, expected):
    assert run(["qfi", "--config", _write(tmp_path, "q.json", {"qfi": spec})]) == 0
    assert json.loads(capsys.readouterr().out)["bound"] == pytest.approx(expected, rel=1e-12)


def test_qfi_pauli_and_general(tmp_path, capsys):
    cfg = {"path": {"coords": ["t"], "T": 1.0}, "params": {"k": 0.5},
           "qfi": {"kind": "pauli", "terms": {"x": "cos(k*x1)", "y": "sin(k*x1)"}, "param": "k"}}
    assert run(["qfi", "--config", _write(tmp_path, "q.json", cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["bound"] == pytest.approx(1.0, rel=1e-12)
    cfg = {"signal": "x1", "path": {"coords": ["t"], "T": 1.0}, "qfi": {"kind": "moving_general", "spec_range": 2}}
    assert run(["qfi", "--config", _write(tmp_path, "q.json", cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["bound"] == pytest.approx(1.0, rel=1e-12)


def test_basis_and_network(capsys):
    assert run(["basis", "--config", str(CONFIGS / "basis.json")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["phase"] == pytest.approx(0.4, abs=1e-9)
    assert run(["network", "--config", str(CONFIGS / "network.json")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert (rec["dfs_qfi"], rec["moving_qfi"], rec["enhancement"]) == (4, 9, 2.25)


def test_chebyshev_basis(tmp_path, capsys):
    cfg = {"basis": {"kind": "chebyshev", "m": 4, "v": 1, "T": 1}}
    assert run(["basis", "--config", _write(tmp_path, "b.json", cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["sensitivity"] == 0.00390625


def test_plotdata_header_and_figure(tmp_path):
    out, fig = tmp_path / "plot.csv", tmp_path / "plot.png"
    assert run(["plotdata", "--config", str(CONFIGS / "plotdata.json"), "--out", str(out), "--figure", str(fig)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,f_gamma,l_star,control"
    assert len(lines) == 502
    assert fig.stat().st_size > 1000


def test_simulate_byte_identical(tmp_path):
    cfg = json.loads((CONFIGS / "simulate.json").read_text())
    cfg["simulate"]["shots"] = [1000, 5000]
    path = _write(tmp_path, "s.json", cfg)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--config", path, "--out", str(a), "--seed", "4"]) == 0
    assert run(["simulate", "--config", path, "--out", str(b), "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "m,variance,crb,ratio"
    fig = tmp_path / "sweep.png"
    assert run(["simulate", "--config", path, "--seed", "4", "--out", str(a), "--figure", str(fig)]) == 0
    assert fig.exists()


def test_design_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run(["design", "--config", str(CONFIGS / "design.json"), "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_grid_flags(tmp_path, capsys):
    assert run(["design", "--config", str(CONFIGS / "design.json"), "--grid-panels", "16", "--grid-points", "4"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert abs(rec["grid_sensitivity"] - 1 / 256) < 1e-2 / 256 * 10


def test_config_errors(tmp_path, capsys):
    assert run(["design", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["design", "--config", str(bad)]) == 1
    assert run(["design", "--config", _write(tmp_path, "p.json", {"signal": "x1 +", "path": {"coords": ["t"], "T": 1}})]) == 1
    assert "offset" in capsys.readouterr().err
    assert run(["design", "--config", _write(tmp_path, "n.json", {"signal": "x1"})]) == 1
    assert run(["nonsense", "--config", "x"]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"signal": "x1^2", "noise": ["2*x1^2"], "path": {"coords": ["t"], "T": 1.0}}
    assert run(["design", "--config", _write(tmp_path, "d.json", cfg)]) == 2
    assert "design_independent_path" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mobilesensor", "qfi", "--config", str(CONFIGS / "qfi.json")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and '"bound": 16' in proc.stdout


def test_serializer_precision():
    text = dumps({"a": 0.1, "b": [1.0, 2.5e-300], "c": 3, "d": True, "e": None, "f": float("nan")})
    rec = json.loads(text)
    assert rec["a"] == 0.1 and rec["b"] == [1.0, 2.5e-300] and rec["f"] is None
    assert "0.10000000000000001" in text
    assert csv_text(["m", "x"], [(10, 1 / 3)]) == "m,x\n10,0.33333333333333331\n"
