import csv
import json
import math
import subprocess
import sys

import pytest

from omnirelay import canonical_scenario_path, cli, sim

SHORT_DURATION = 1.0


@pytest.fixture
def short_scenario(tmp_path):
    text = open(canonical_scenario_path()).read().replace("duration: 60.0", f"duration: {SHORT_DURATION}")
    path = tmp_path / "short.yaml"
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_single_vehicle(short_scenario, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", short_scenario, "--out", str(out), "--vehicle", "omni"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["metrics_omni.json", "run_omni.csv", "scenario_resolved.json"]
    rows = _rows(out / "run_omni.csv")
    assert rows[0] == cli.csv_header(6)
    assert len(rows) - 1 == math.floor(SHORT_DURATION / 0.05) + 1
    assert {len(r) for r in rows} == {len(rows[0])}
    metrics = json.loads((out / "metrics_omni.json").read_text())
    assert set(sim.METRIC_KEYS) <= set(metrics)
    assert metrics["steps"] == len(rows) - 1


def test_header_order():
    head = cli.csv_header(4)
    assert head[:14] == ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
    assert head[14:22] == [f"thrust_{i}" for i in range(1, 5)] + [f"rate_{i}" for i in range(1, 5)]
    assert head[22:] == ["misalign_bs_rad", "misalign_uav2_rad", "margin_bs", "margin_uav2",
                         "snr_bs_db", "snr_uav2_db", "rate_bps_hz", "cost", "kkt", "iters", "converged"]


def test_run_both_and_rerun_identical(short_scenario, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["run", "--scenario", short_scenario, "--out", str(out), "--seed", "11"]) == 0
    for name in ("run_omni.csv", "run_under.csv", "metrics_omni.json", "metrics_under.json", "comparison.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(_rows(a / "run_under.csv")[0]) == len(cli.csv_header(4))


def test_compare(short_scenario, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--scenario", short_scenario, "--out", str(out)]) == 0
    comp = json.loads((out / "comparison.json").read_text())
    assert set(comp) == {"omni", "under", "delta"}
    assert set(comp["omni"]) == set(comp["under"]) == set(comp["delta"]) == set(sim.METRIC_KEYS)
    for key in sim.METRIC_KEYS:
        assert comp["delta"][key] == comp["omni"][key] - comp["under"][key]
    printed = capsys.readouterr().out.splitlines()
    assert printed[0].split() == ["metric", "omni", "under", "delta"]
    assert len(printed) == 2 + len(sim.METRIC_KEYS)


def test_emit_only_json(short_scenario, tmp_path):
    out = tmp_path / "j"
    argv = ["run", "--scenario", short_scenario, "--out", str(out), "--vehicle", "omni", "--emit", "json"]
    assert cli.main(argv) == 0
    assert not (out / "run_omni.csv").exists()
    assert (out / "metrics_omni.json").exists()


def test_solve_ocp(short_scenario, capsys):
    assert cli.main(["solve-ocp", "--scenario", short_scenario, "--at", "0.5"]) == 0
    text = capsys.readouterr().out
    for label in ("cost", "kkt_residual", "converged", "first rates"):
        assert label in text


def test_missing_file(tmp_path, capsys):
    code = cli.main(["run", "--scenario", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_IO == 3
    assert capsys.readouterr().err


def test_unwritable_output(short_scenario, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--scenario", short_scenario, "--out", str(blocker / "sub")]) == 3


def test_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("bs_position: [0, 0, 0]\n")
    assert cli.main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "duration" in capsys.readouterr().err
    bad.write_text("duration: [1,\n")
    assert cli.main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line" in capsys.readouterr().err


def test_solve_ocp_time_out_of_range(short_scenario):
    assert cli.main(["solve-ocp", "--scenario", short_scenario, "--at", "99"]) == 2


def test_non_finite_refused(tmp_path):
    with pytest.raises(FloatingPointError):
        cli.write_json(str(tmp_path / "x.json"), {"a": [1.0, float("nan")]})
    with pytest.raises(FloatingPointError):
        cli._fmt(float("inf"))


def test_bad_vehicle_choice(short_scenario, tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["run", "--scenario", short_scenario, "--out", str(tmp_path), "--vehicle", "tri"])
    assert err.value.code == 2


def test_module_entry_point(short_scenario, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "omnirelay", "run", "--scenario", short_scenario, "--out", str(tmp_path / "m"),
         "--vehicle", "omni", "--emit", "json"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
