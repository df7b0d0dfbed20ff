import json
import subprocess
import sys

import pytest

from rotmhd.cli import cli

RUN_CONFIG = """\
grid: {n: 16}
physics: {epsilon: 0.5, qh_cancellation: true}
initial_data: {kind: quasi_homog, band: 3}
integrator: {dt: 0.01, t_end: 0.05}
output: {snapshot_every: 2}
seed: 4
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_check_passes(capsys):
    assert cli(["check", "--grid", "64", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "23 passed, 0 failed" in out and "FAIL" not in out


def test_check_detects_corruption(capsys):
    assert cli(["check", "--grid", "32", "--corrupt-leray", "1"]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_missing_config(tmp_path, capsys):
    assert cli(["run", str(tmp_path / "none.yaml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_bad_key_reports_line(tmp_path, capsys):
    path = write(tmp_path, "grid: {n: 16}\nphysics:\n  epsilon: 0.1\n  viscocity: 1\n")
    assert cli(["run", path]) == 1
    err = capsys.readouterr().err
    assert "line 4" in err and "did you mean 'nu'" in err


def test_info(capsys):
    assert cli(["info"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("rotmhd ") and "default config:" in out and "grid:" in out


def test_family_mismatch(tmp_path, capsys):
    assert cli(["sweep", write(tmp_path, RUN_CONFIG)]) == 1
    assert "experiment.kind" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "res"
    assert cli(["run", write(tmp_path, RUN_CONFIG), "-o", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    paths = {f["path"] for f in manifest["files"]}
    assert {"config.json", "timeseries.csv", "final.rmhd", "snapshots/step_0000002.rmhd"} <= paths
    assert manifest["runs"][0]["status"] == "ok" and manifest["runs"][0]["steps"] == 5
    assert len((out / "timeseries.csv").read_text().splitlines()) == 7


def test_runtime_failure_exit_code(tmp_path):
    text = RUN_CONFIG.replace("band: 3}", "band: 3, r_amplitude: 5}").replace("epsilon: 0.5", "epsilon: 1.0")
    assert cli(["run", write(tmp_path, text), "-o", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("kind,extra", [
    ("jsweep", "experiment: {kind: jsweep, system: limit, j_list: [2, 4], samples: 2}\n"),
    ("stability", "experiment: {kind: stability, system: limit, deltas: [0.001]}\n"),
])
def test_limit_studies(tmp_path, kind, extra):
    text = "grid: {n: 16}\ninitial_data: {kind: quasi_homog}\nintegrator: {dt: 0.01, t_end: 0.02}\nseed: 1\n" + extra
    out = tmp_path / "o"
    assert cli([kind, write(tmp_path, text), "-o", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rotmhd", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("rotmhd ")
