import pathlib
import subprocess
import sys

import numpy as np
import pytest

from radleg.cli import main
from radleg.io_dataset import Trajectory, write_trajectory

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def _csv(out):
    lines = out.splitlines()
    return dict(zip(lines[0].split(","), lines[1].split(",")))


@pytest.fixture(scope="module")
def line_log(tmp_path_factory):
    d = tmp_path_factory.mktemp("line")
    assert main(["synth", "--scenario", str(CONFIGS / "line.ini"), "--out", str(d)]) == 0
    return d


def test_eval_identical_is_zero(tmp_path, capsys):
    rng = np.random.default_rng(0)
    t = np.arange(50) * 0.25
    p = np.column_stack([t, np.sin(t), 0 * t]) + rng.normal(0, 0.01, (50, 3))
    f = tmp_path / "a.txt"
    write_trajectory(Trajectory(t, p, np.tile(np.eye(3), (50, 1, 1))), f)
    assert main(["eval", "--est", str(f), "--ref", str(f), "--sub-length", "2"]) == 0
    row = _csv(capsys.readouterr().out)
    for k in ("ate_t", "ate_r", "rte_t", "rte_r", "ate_z"):
        assert float(row[k]) == 0.0


def test_run_then_eval_noiseless(line_log, tmp_path, capsys):
    out = tmp_path / "est.txt"
    assert main(["run", "--log", str(line_log), "--config", str(CONFIGS / "estimator.ini"), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["eval", "--est", str(out), "--ref", str(line_log / "gt.txt")]) == 0
    row = _csv(capsys.readouterr().out)
    assert float(row["ate_t"]) < 1e-3


def test_egovel(line_log, capsys):
    assert main(["egovel", "--log", str(line_log), "--scan", "60"]) == 0
    text = capsys.readouterr().out
    assert "valid            : True" in text
    assert main(["egovel", "--log", str(line_log), "--scan", "100000"]) == 1


def test_ablate(line_log, capsys):
    assert main(["ablate", "--log", str(line_log), "--sub-length", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    rows = [ln.split(",") for ln in lines[1:4]]
    assert [r[0] for r in rows] == ["radar", "leg", "full"]
    assert all(float(r[1]) < 0.05 for r in rows)


def test_missing_log_exits_one(tmp_path, capsys):
    assert main(["run", "--log", str(tmp_path / "none"), "--out", str(tmp_path / "o.txt")]) == 1
    assert "error" in capsys.readouterr().err


def test_malformed_trajectory_exits_one(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0 0 0\n")
    assert main(["eval", "--est", str(f), "--ref", str(f)]) == 1


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--est", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--log", "x", "--mode", "lidar"])
    assert exc.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "radleg.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "ablate" in r.stdout
