import json
import subprocess
import sys

import numpy as np
import pytest

from nlifem.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, run
from nlifem.report import read_csv


def test_solve_prints_one_record(capsys):
    assert run(["solve", "--example", "ex1", "--k", "2", "--h", "2^-4", "--delta", "0.25", "0.5"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    rec = dict(zip(lines[0].split(","), map(float, lines[1].split(","))))
    assert rec["h"] == 0.0625 and rec["delta2"] == 0.5
    assert 0 < rec["err_l2"] < rec["err_energy"] < 1e-2
    assert rec["residual"] < 1e-10


def test_solve_dump_matrix(tmp_path, capsys):
    out = tmp_path / "A.txt"
    assert run(["solve", "--h", "0.25", "--k", "1", "--dump-matrix", str(out)]) == EXIT_OK
    rows = np.loadtxt(out)
    assert rows.shape[1] == 3
    n = int(rows[:, 0].max()) + 1
    A = np.zeros((n, n))
    A[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.allclose(A, A.T, atol=1e-14)


@pytest.mark.parametrize("argv, msg", [
    (["convergence", "--mesh.size=3"], "size"),
    (["convergence", "--delta", "0.3", "0.5"], "integer multiple"),
    (["solve", "--h", "abc"], "2^-e"),
    (["solve", "--bogus"], "unrecognized"),
    (["max-principle", "--config", "/nonexistent.json"], "cannot read"),
    ([], None),
])
def test_configuration_errors_exit_2(argv, msg, capsys):
    assert run(argv) == EXIT_CONFIG
    if msg:
        assert msg in capsys.readouterr().err


def test_json_syntax_error_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"k": 2,,}')
    assert run(["convergence", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line 1, column" in capsys.readouterr().err


def test_unwritable_out_exit_2(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert run(["convergence", "--levels", "2", "3", "--out", str(blocker / "sub")]) == EXIT_CONFIG


def test_convergence_writes_outputs(tmp_path, capsys):
    code = run(["convergence", "--levels", "3", "4", "--k", "1", "--out", str(tmp_path), "--prefix", "c",
                "--png", "--quad.error_order=12"])
    assert code in (EXIT_OK, EXIT_FAIL)
    for ext in ("csv", "svg", "png"):
        assert (tmp_path / f"c.{ext}").stat().st_size > 0
    man = json.loads((tmp_path / "c_manifest.json").read_text())
    assert (code == EXIT_OK) == man["passed"]
    assert len(read_csv(tmp_path / "c.csv")) == 2


def test_no_svg_flag(tmp_path, capsys):
    run(["convergence", "--levels", "2", "3", "--out", str(tmp_path), "--prefix", "c", "--no-svg"])
    assert not (tmp_path / "c.svg").exists()


def test_flux_check_exit_matches_manifest(tmp_path, capsys):
    code = run(["flux-check", "--halvings", "3", "--out", str(tmp_path), "--prefix", "f"])
    man = json.loads((tmp_path / "f_manifest.json").read_text())
    assert code == (EXIT_OK if man["passed"] else EXIT_FAIL)
    out = capsys.readouterr().out
    assert ("FAIL order_flux~2" in out) == (not man["passed"])


def test_flux_check_linear_passes(tmp_path, capsys):
    assert run(["flux-check", "--fields", "linear", "--halvings", "2", "--out", str(tmp_path)]) == EXIT_OK


def test_max_principle_cli(tmp_path, capsys):
    assert run(["max-principle", "--seeds", "2", "--out", str(tmp_path), "--prefix", "m"]) == EXIT_OK
    assert not (tmp_path / "m.svg").exists()
    assert "PASS nodal_max<=boundary_max" in capsys.readouterr().out


def test_reproduce_table1(tmp_path, capsys):
    code = run(["reproduce", "table1", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "table1.csv")
    assert len(rows) == 4
    assert {"k1_err_energy", "k2_rate_l2", "k3_err_l2"} <= set(rows[0])
    for k in (1, 2, 3):
        assert (tmp_path / f"table1_k{k}.svg").exists()
    man = json.loads((tmp_path / "table1_manifest.json").read_text())
    assert man["passed"] and len(man["outputs"]) == 7
    assert "reference k=1 h=2^-5" in capsys.readouterr().out


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "nlifem.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("nlifem ")
