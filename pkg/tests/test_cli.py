import json
import subprocess
import sys

import pytest

from cclab import cli
from cclab.errors import ConfigError


def _run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    status = cli.main(argv)
    report = None
    if (tmp_path / "report.json").exists():
        report = json.loads((tmp_path / "report.json").read_text())
    return status, report


def test_capacity_report(tmp_path):
    status, rep = _run(tmp_path, "capacity", "--base", "bits")
    assert status == 0
    assert rep["results"]["capacity_bits"] == pytest.approx(0.5310, abs=1e-4)
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["config"]["epsilon"] == 0.1


def test_capacity_from_a_matrix(tmp_path):
    status, rep = _run(tmp_path, "capacity", config={"matrix": [[1.0, 0.0], [0.0, 1.0]]})
    assert status == 0
    assert rep["results"]["capacity_nats"] == pytest.approx(0.6931471805599453, abs=1e-9)


def test_trapdoor_report(tmp_path):
    status, rep = _run(tmp_path, "inverse-trapdoor", "--base", "bits")
    assert status == 0
    assert rep["results"]["expected_dist_bits"] == pytest.approx(-0.5, abs=1e-12)
    assert rep["results"]["detailed_balance"] == "pass"


def test_dp_solve_report(tmp_path):
    status, rep = _run(tmp_path, "dp-solve")
    assert status == 0
    res = rep["results"]
    assert {"dp_value", "oracle_value", "gap"} <= set(res)
    assert res["gap"] <= 0.02


def test_failed_check_exits_2(tmp_path):
    status, rep = _run(tmp_path, "dp-solve", config={"resolution": 1})
    assert status == 2
    assert rep["passed"] is False


@pytest.mark.parametrize(
    "args, config",
    [
        (("pm-sim",), None),  # stochastic without a seed
        (("capacity",), {"epsilnn": 0.1}),
        (("capacity",), {"kind": "hmm"}),
        (("capacity", "--trials", "5"), None),
        (("capacity",), {"epsilon": 2.0}),
        (("inverse-gauss", "--seed", "-3"), None),
    ],
)
def test_config_errors_exit_1(tmp_path, capsys, args, config):
    status, _ = _run(tmp_path, *args, config=config)
    assert status == 1
    assert "cclab:" in capsys.readouterr().err


def test_unreadable_config_exits_1(tmp_path):
    assert cli.main(["capacity", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["capacity", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_resolve_config_precedence():
    cfg = cli.resolve_config("inverse-gauss", {"trials": 10, "seed": 1}, seed=5, trials=20)
    assert cfg["seed"] == 5 and cfg["trials"] == 20
    with pytest.raises(ConfigError):
        cli.resolve_config("nope")


def test_reports_are_byte_identical(tmp_path):
    cfg = {"n": 5, "trials": 10_000, "steps": [2, 5], "achievability_runs": 20, "achievability_n": 25}
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert _run(d, "pm-sim", "--seed", "3", config=cfg)[0] in (0, 2)
    for name in ("report.json", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["generator"].startswith("numpy.random.PCG64")


def test_gaussian_kind(tmp_path):
    status, rep = _run(tmp_path, "inverse-gauss", "--seed", "1", "--trials", "100000")
    assert status == 0
    assert rep["results"]["C"] == pytest.approx(8 / 7, abs=1e-12)


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "cclab.cli", "capacity", "--out", str(tmp_path)], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert (tmp_path / "report.json").exists()
