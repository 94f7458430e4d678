import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from oedctl import _kernels
from oedctl.cli import dispatch, thread_limit, UsageError


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv(tmp_path):
    out = tmp_path / "traj.csv"
    code = dispatch(["run", "--example", "m1", "--kx", "100", "--dt", "0.0005", "--t-final", "0.05",
                     "--x0", "0.9,0.9", "--out", str(out)])
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["t", "x1", "x2", "y1", "sigma", "tau_c"]
    assert len(rows) == 1 + 101
    assert rows[-1][-1] == "nan"
    assert float(rows[3][0]) == 0.001


def test_csv_deterministic_except_timing(tmp_path):
    args = ["run", "--example", "synthetic", "--dims", "8", "--t-final", "0.02", "--kx", "500"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert dispatch(args + ["--out", str(a)]) == 0
    assert dispatch(args + ["--out", str(b)]) == 0
    strip = lambda rows: [r[:-1] for r in rows]
    assert strip(_rows(a)) == strip(_rows(b))
    assert b"\r" not in a.read_bytes()


def test_backends_give_same_csv(tmp_path):
    if not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    args = ["run", "--example", "m1", "--t-final", "0.02"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert dispatch(["--backend", "numba"] + args + ["--out", str(a)]) == 0
    assert dispatch(["--backend", "numpy"] + args + ["--out", str(b)]) == 0
    A = np.array([[float(v) for v in r[:-1]] for r in _rows(a)[1:]])
    B = np.array([[float(v) for v in r[:-1]] for r in _rows(b)[1:]])
    np.testing.assert_allclose(A, B, rtol=1e-9, atol=1e-12)


def test_solve_writes_reference(tmp_path):
    out = tmp_path / "ref.csv"
    assert dispatch(["solve", "--example", "m1", "--t-final", "0.01", "--x0", "0.5,0.4",
                     "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["t", "chi1", "chi2", "iterations", "jump_flag"]
    assert len(rows) == 22 and all(r[-1] == "0" for r in rows[1:])


def test_bench_json(tmp_path):
    out = tmp_path / "bench.json"
    assert dispatch(["bench", "--dims", "8,16,32", "--mode", "identity", "--steps", "20",
                     "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["dims"] == [8, 16, 32] and res["mode"] == "identity"
    keys = {"d_x", "median", "q25", "q75", "min", "max", "mad_over_median"}
    assert all(keys <= set(d) for d in res["per_dim"])
    assert set(res["trend"]) == {"p1", "p2", "r_squared"}


def test_sclqr_command(capsys):
    assert dispatch(["sclqr", "--t-final", "0.05"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    [],
    ["frobnicate"],
    ["run", "--kx", "-1"],
    ["run", "--x0", "1,2,3"],
    ["run", "--dt", "0.3", "--t-final", "1"],
    ["bench", "--dims", "7"],
    ["run", "--x0", "a,b"],
])
def test_usage_errors(argv, capsys):
    assert dispatch(argv) == 1
    assert capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    assert dispatch(["run", "--bogus"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_numeric_failure_exit_two(capsys):
    assert dispatch(["run", "--example", "m1", "--x0", "nan,0", "--t-final", "0.01"]) == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "NonFiniteEvaluation"


def test_verify_subset(capsys):
    assert dispatch(["verify", "--criteria", "6,10"]) == 0
    out = capsys.readouterr().out
    assert "criterion  6 PASS" in out and "criterion 10 PASS" in out


def test_thread_limit(monkeypatch):
    monkeypatch.setenv("OEDCTL_THREADS", "3")
    assert thread_limit() == 3
    monkeypatch.setenv("OEDCTL_THREADS", "0")
    with pytest.raises(UsageError):
        thread_limit()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "oedctl", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "run" in res.stdout
    res = subprocess.run([sys.executable, "-m", "oedctl", "--nope"], capture_output=True, text=True)
    assert res.returncode == 1
