import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dropoutmf.cli import main
from dropoutmf.matrix_core import write_matrix_csv


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_check_equivalence(tmp_path):
    assert main(["check-equivalence", "--instances", "10", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["passed"] is True
    assert report["parameters"]["seed"] == 0
    assert len(read_csv(tmp_path / "equivalence.csv")) == 11


def test_train_outputs(tmp_path):
    args = ["train", "--iters", "100", "--d", "4", "--m", "12", "--n", "10", "--rank", "2", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = read_csv(tmp_path / "trace.csv")
    assert rows[0] == ["iteration", "stochastic", "ema", "deterministic"] and len(rows) == 101
    assert read_csv(tmp_path / "spectrum.csv")[0] == ["index", "data", "product"]
    first = (tmp_path / "trace.csv").read_text()
    assert main(args) == 0
    assert (tmp_path / "trace.csv").read_text() == first


def test_train_adaptive_json_only(tmp_path):
    assert main(["train", "--p", "0.9", "--d", "5", "--iters", "20", "--m", "8", "--n", "8", "--rank", "2",
                 "--format", "json", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["theta"] == pytest.approx(0.9 / (5 - 4 * 0.9))
    assert not (tmp_path / "trace.csv").exists()


def test_closed_form(tmp_path):
    X = np.diag([3.0, 1.0])
    write_matrix_csv(tmp_path / "x.csv", X)
    assert main(["closed-form", "--input", str(tmp_path / "x.csv"), "--p", "0.5", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert rows[0] == ["index", "data", "closed_form"]
    assert [float(v) for v in rows[1][1:]] == [3.0, 1.5]
    assert float(rows[2][2]) == 0.0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["d_bar"] == 1 and report["results"]["mu"] == 1.5


def test_fig1_and_fig3_small(tmp_path):
    status = main(["fig1", "--iters", "200", "--theta", "0.5", "--d", "5", "--m", "10", "--n", "10",
                   "--out", str(tmp_path / "f1")])
    assert status in (0, 1)
    rows = read_csv(tmp_path / "f1" / "trace.csv")
    assert rows[0] == ["theta", "d", "iteration", "stochastic", "ema", "deterministic"] and len(rows) == 201
    assert main(["fig3", "--iters", "300", "--d", "12", "--out", str(tmp_path / "f3")]) == 0
    header = read_csv(tmp_path / "f3" / "spectrum.csv")[0]
    assert header == ["index", "data", "closed_form", "fixed_d12", "adaptive_d12"]


def test_reconstruct_and_errors(tmp_path, capsys):
    X = np.random.default_rng(0).normal(size=(20, 6))
    write_matrix_csv(tmp_path / "x.csv", X)
    assert main(["reconstruct", str(tmp_path / "x.csv"), "--epochs", "1", "--d", "4", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "reconstruct.csv")) == 3
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert main(["reconstruct", str(tmp_path / "bad.csv"), "--out", str(tmp_path)]) == 2
    assert "ragged" in capsys.readouterr().err
    assert main(["closed-form", "--p", "1.0", "--m", "5", "--n", "5", "--rank", "2", "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dropoutmf", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout
