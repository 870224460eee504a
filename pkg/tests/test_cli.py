import csv
import os
import subprocess
import sys

import pytest

import thermidor.cli as cli
from thermidor.errors import SolverError
from thermidor.io import read_eoc_csv

DECOUPLED = """[mesh]
nx = 4
[params]
n_species = 1
K = 0.5
D = 0.5
beta = 0
[time]
tau = 0.01
t_end = 0.03
[study]
nx0 = 4
levels = 2
nx_fine = 4
tau0 = 0.02
"""

MMS = """[mesh]
nx = 4
[params]
n_species = 2
K = 0.5
D = 0.4, 0.3
S = 0.1, 0.2
F = 0.3, 0.1
A = 0.5, 0.2
B = 0.1, 0.3
beta = 1, 0.5; 0.5, 2
delta = 0.25
[time]
tau = 0.01
t_end = 0.02
[initial]
preset = mms
[study]
samples = 5
"""


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.setenv("THERMIDOR_OUT", str(tmp_path / "out"))

    def write(text, name="c.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_run_writes_fields_and_log(config, tmp_path, capsys):
    assert cli.main(["run", config(DECOUPLED)]) == 0
    out = tmp_path / "out"
    assert (out / "fields_final.vtk").read_text().count("SCALARS") == 3
    rows = list(csv.reader((out / "steps.csv").open()))
    assert rows[0][0] == "t" and len(rows) == 4
    assert "3 steps" in capsys.readouterr().out


def test_run_mms_preset(config, tmp_path):
    assert cli.main(["run", config(MMS)]) == 0
    assert (tmp_path / "out" / "fields_final.vtk").exists()


def test_converge_space_and_time(config, tmp_path):
    path = config(DECOUPLED)
    assert cli.main(["converge-space", path]) == 0
    assert cli.main(["converge-time", path]) == 0
    space = read_eoc_csv(tmp_path / "out" / "eoc_space.csv")
    time = read_eoc_csv(tmp_path / "out" / "eoc_time.csv")
    assert len(space.rows) == 2 and space.rows[1].h == space.rows[0].h / 2
    assert [r.tau for r in time.rows] == [0.02, 0.01]


def test_decoupled_study_rejects_couplings(config, capsys):
    assert cli.main(["converge-space", config(DECOUPLED.replace("beta = 0", "beta = 1"))]) == 2
    assert "preset = mms" in capsys.readouterr().err


def test_mms_check_passes(config, tmp_path, capsys):
    assert cli.main(["mms-check", config(MMS)]) == 0
    rows = list(csv.reader((tmp_path / "out" / "mms_check.csv").open()))
    assert [r[0] for r in rows[1:]] == ["theta", "u", "v"]
    assert max(float(r[1]) for r in rows[1:]) <= 1e-8
    assert "passed" in capsys.readouterr().out


def test_mms_check_failure_exit_4(config, monkeypatch, capsys):
    monkeypatch.setattr(cli, "MMS_TOLERANCE", 0.0)
    assert cli.main(["mms-check", config(MMS)]) == 4
    assert "error [AccuracyError]" in capsys.readouterr().err


def test_config_errors_exit_2(config, tmp_path, capsys):
    assert cli.main(["run", config(DECOUPLED.replace("K = 0.5", "K = -1"))]) == 2
    assert "0 < m <= K <= M" in capsys.readouterr().err
    assert cli.main(["run", config(DECOUPLED + "[output]\nfoo = 1\n")]) == 2
    assert "'foo'" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 2
    assert cli.main(["explode", config(DECOUPLED)]) == 2
    assert cli.main([]) == 2


def test_solver_error_exit_3_writes_partial_table(config, tmp_path, monkeypatch, capsys):
    import thermidor.verification as ver
    real = ver.run_simulation
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("no convergence", residual=0.5, tag="u_1")
        return real(*args, **kwargs)
    monkeypatch.setattr(ver, "run_simulation", flaky)
    assert cli.main(["converge-space", config(DECOUPLED)]) == 3
    err = capsys.readouterr().err
    assert "error [SolverError]" in err and "partial table" in err
    assert len(read_eoc_csv(tmp_path / "out" / "eoc_space.csv").rows) == 1


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.delenv("THERMIDOR_OUT", raising=False)
    target = tmp_path / "results"
    p = tmp_path / "c.ini"
    p.write_text(DECOUPLED + f"[output]\ndir = {target}\n")
    assert cli.main(["run", str(p)]) == 0
    assert (target / "steps.csv").exists()


def test_module_entry_point(config, tmp_path):
    env = dict(os.environ, THERMIDOR_OUT=str(tmp_path / "sub"))
    res = subprocess.run([sys.executable, "-m", "thermidor", "run", config(DECOUPLED)],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "sub" / "fields_final.vtk").exists()
    res = subprocess.run([sys.executable, "-m", "thermidor", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "mms-check" in res.stdout
