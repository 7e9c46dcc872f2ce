import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sivcm.cli import main
from sivcm.io import dumps_json, read_dataset_csv
from sivcm.errors import MalformedCsv

FIXTURE = Path(__file__).parent / "data" / "sivcm_n60_seed42.csv"


def test_fit_fixture(tmp_path, capsys):
    assert main(["fit", str(FIXTURE), "--p", "2", "--q", "3", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert abs(np.linalg.norm(fit["beta_hat"]) - 1) < 1e-12
    assert fit["beta_hat"][0] > 0
    rows = (tmp_path / "curves.csv").read_text().splitlines()
    assert rows[0] == "u,g1,g2,g3,gdot1,gdot2,gdot3" and len(rows) == 102


def test_fit_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        main(["fit", str(FIXTURE), "--p", "2", "--q", "3", "--seed", "1",
              "--out", str(tmp_path / sub)])
    assert (tmp_path / "a/fit.json").read_bytes() == (tmp_path / "b/fit.json").read_bytes()


def test_single_index_mode(tmp_path):
    Y, X, Z = read_dataset_csv(FIXTURE, 2, 3)
    path = tmp_path / "si.csv"
    lines = ["y,x1,x2,z1"] + [f"{y:.17g},{x[0]:.17g},{x[1]:.17g},1" for y, x in zip(Y, X)]
    path.write_text("\n".join(lines) + "\n")
    assert main(["fit", str(path), "--p", "2", "--q", "1", "--h", "0.15",
                 "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["q"] == 1 and fit["bandwidths"]["h"] == 0.15


def test_usage_errors(tmp_path, capsys):
    assert main(["fit", str(FIXTURE), "--q", "3"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("usage_error: --p")
    assert main(["fit", str(FIXTURE), "--p", "2", "--q", "3", "--weight-lo", "0"]) == 1
    assert main(["infer", str(FIXTURE), "--p", "2", "--q", "3", "--methods", "foo"]) == 1
    assert main(["bogus"]) == 1
    assert main([]) == 1


def test_malformed_csv_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1,x2,z1\n1,2,3,1\n1,abc,3,1\n")
    assert main(["fit", str(bad), "--p", "2", "--q", "1"]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("malformed_csv: line 3:")
    with pytest.raises(MalformedCsv):
        read_dataset_csv(bad, 2, 2)


def test_numerical_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "const.csv"
    rows = ["y,x1,z1"] + [f"{i % 3},{0.0},1" for i in range(20)]
    path.write_text("\n".join(rows) + "\n")
    assert main(["fit", str(path), "--p", "1", "--q", "1"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and ":" in err[0]


def test_infer_and_bandwidth(tmp_path):
    assert main(["infer", str(FIXTURE), "--p", "2", "--q", "3", "--beta-grid", "12",
                 "--methods", "eel,ael", "--mc-draws", "2000", "--beta-test", "1,2",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "region.json").read_text())
    assert list(rep["regions"]) == ["EEL", "AEL"]
    assert rep["verdicts"][0]["AEL"]["inside"] is True
    prof = (tmp_path / "statistic_profile.csv").read_text().splitlines()
    assert len(prof) == 13
    assert main(["bandwidth", str(FIXTURE), "--p", "2", "--q", "3", "--out", str(tmp_path)]) == 0
    bw = json.loads((tmp_path / "bandwidth.json").read_text())
    assert bw["h_opt"] in bw["grid"]


def test_simulate_subprocess(tmp_path):
    env = dict(os.environ, SIVCM_THREADS="1")
    cmd = [sys.executable, "-m", "sivcm.cli", "simulate", "--n", "50", "--replicates", "2",
           "--seed", "3", "--out", str(tmp_path)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    assert "coverage" in out.stdout
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema_version"] == 1 and summary["config"]["base_seed"] == 3


def test_json_writer_is_stable():
    doc = {"b": 0.1, "a": [1, 2.5, float("nan")], "c": {"x": True, "y": None}}
    text = dumps_json(doc)
    assert text == dumps_json(doc)
    assert text.index('"b"') < text.index('"a"')
    assert "0.10000000000000001" in text and "null" in text
