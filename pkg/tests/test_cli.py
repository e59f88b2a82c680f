import json
import subprocess
import sys

import pytest

from partialvp.cli import main
from partialvp.config import parse_config

from test_harness import SMALL


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_simulate_with_overrides(config_file, tmp_path, capsys):
    out = tmp_path / "sim"
    code = main(["simulate", "--config", str(config_file), "--out-dir", str(out),
                 "--n-cut", "6", "--beta", "0.25", "--t-final", "0.05"])
    assert code == 0
    resolved = parse_config((out / "config.resolved").read_text())
    assert resolved.cutoff.n_cut == 6.0 and resolved.cutoff.beta == 0.25
    assert resolved.numerics.t_final == 0.05
    assert "[PASS] N=6 energy_conservation" in capsys.readouterr().out


def test_ladder_verify_report(config_file, tmp_path, capsys):
    out = tmp_path / "lad"
    code = main(["ladder", "--config", str(config_file), "--out-dir", str(out),
                 "--n-values", "4", "6", "8", "--t-final", "0.05"])
    assert (out / "N=4" / "energy.csv").exists() and (out / "N=8" / "qsup.csv").exists()
    printed = capsys.readouterr().out
    assert code == (0 if "[FAIL]" not in printed else 1)
    assert main(["verify", "--out-dir", str(out)]) == code
    assert main(["report", "--out-dir", str(out)]) == code
    data = json.loads((out / "report.json").read_text())
    assert data["all_passed"] == (code == 0)
    assert {c["name"] for c in data["checks"]} >= {"v_max slope", "far_field slope", "cauchy monotone"}


def test_failed_check_gives_nonzero_exit(config_file, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config_file), "--out-dir", str(out), "--t-final", "0.05"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    summary["identity_initial"]["residual"] = 0.5
    (out / "summary.json").write_text(json.dumps(summary))
    assert main(["verify", "--out-dir", str(out)]) == 1


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL.replace("alpha = 2", "alpha = 0.9", 1))
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "x")]) == 2
    assert "alpha must exceed 1" in capsys.readouterr().err
    assert main(["verify", "--out-dir", str(tmp_path / "missing")]) == 2


def test_ladder_needs_cutoffs(config_file, tmp_path, capsys):
    assert main(["ladder", "--config", str(config_file), "--out-dir", str(tmp_path)]) == 2
    assert "n-values" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "partialvp.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "ladder", "verify", "report"):
        assert sub in proc.stdout
