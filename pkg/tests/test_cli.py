import json
import math

import pytest

from brakeorbit import cli
from brakeorbit.errors import ConfigError

BASE = {"nonlinearity": {"kind": "pure_power", "p": 3.0}, "N": 1}


def write_config(path, **over):
    cfg = {**BASE, "output_dir": str(path.parent / "out"), **over}
    path.write_text(json.dumps(cfg))
    return path


@pytest.mark.parametrize("patch, key", [
    ({"N": 0}, "N"),
    ({"N": 1.5}, "N"),
    ({"grid": {"n_r": -5}}, "grid.n_r"),
    ({"grid": {"dy": "small"}}, "grid.dy"),
    ({"grid": {"width": 3}}, "grid.width"),
    ({"b_list": [0.5, 1.0]}, "b_list"),
    ({"b_list": 0.5}, "b_list"),
    ({"minimizer": {"max_iters": 2.5}}, "minimizer.max_iters"),
    ({"minimizer": {"bogus": 1}}, "minimizer.bogus"),
    ({"colour": "red"}, "colour"),
    ({"nonlinearity": "cubic"}, "nonlinearity"),
])
def test_malformed_config_exit_2(tmp_path, capsys, patch, key):
    path = write_config(tmp_path / "run.json", **patch)
    assert cli.run(path) == 2
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert err["key"] == key


def test_missing_nonlinearity(capsys):
    with pytest.raises(ConfigError) as info:
        cli.parse_config({"N": 1})
    assert info.value.key == "nonlinearity"


def test_unreadable_and_broken_files(tmp_path, capsys):
    assert cli.run(tmp_path / "nope.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(bad) == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["key"] == "<json>"


def test_supercritical_power_rejected(tmp_path, capsys):
    path = write_config(tmp_path / "run.json", nonlinearity={"kind": "pure_power", "p": 5.0})
    assert cli.run(path) == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["key"] == "nonlinearity"


def test_empty_sweep_writes_ground_state_only(tmp_path):
    path = write_config(tmp_path / "run.json", b_list=[])
    assert cli.run(path) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ground_state.csv", "ground_state.json", "summary.csv"]
    assert cli.read_summary(out / "summary.csv") == []
    gs = json.loads((out / "ground_state.json").read_text())
    assert gs["c"] == pytest.approx(4.0 / 3.0, abs=1e-3)


def test_output_root_env(tmp_path, monkeypatch):
    target = tmp_path / "elsewhere"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(target))
    path = write_config(tmp_path / "run.json")
    assert cli.run(path) == 0
    assert (target / "ground_state.json").exists()
    assert not (tmp_path / "out").exists()


@pytest.fixture(scope="module")
def half_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    path = write_config(d / "run.json", b_list=[0.5])
    status = cli.run(path)
    return status, d / "out"


def test_half_level_run(half_run):
    status, out = half_run
    assert status == 0
    rows = cli.read_summary(out / "summary.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row["status"] == "ok" and row["converged"]
    assert row["T_b"] > 0 and math.isfinite(row["T_b"])
    assert row["checks_passed"] == row["checks_total"] > 0
    assert row["m_b"] >= 0
    sub = out / "b_0.5000"
    for name in ("trajectory.csv", "energy.csv", "solution.json", "verdict.json", "constants.json"):
        assert (sub / name).exists()
    verdict = json.loads((sub / "verdict.json").read_text())
    assert verdict["passed"]


def test_verify_subcommand(half_run, capsys):
    _, out = half_run
    assert cli.main(["verify", "--solution", str(out / "b_0.5000")]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["passed"]
    assert cli.verify_dir(out / "missing") == 1


def test_diagram_subcommand(half_run, tmp_path):
    _, out = half_run
    target = tmp_path / "diagram.csv"
    assert cli.main(["diagram", "--summary", str(out / "summary.csv"), "--out", str(target)]) == 0
    assert target.read_text() == (out / "energy_diagram.csv").read_text()


def test_summary_round_trip(tmp_path):
    rows = [{"b_fraction": 0.0, "b": 0.0, "m_b": 2.9, "T_b": math.inf, "max_abs_E_plus_b": 1e-4,
             "residual": 2e-4, "checks_passed": 14, "checks_total": 14, "converged": True,
             "lower_bound": 1.6, "status": "ok"},
            {"b_fraction": 0.5, "b": 0.66, "m_b": None, "T_b": None, "max_abs_E_plus_b": None,
             "residual": None, "checks_passed": 0, "checks_total": 0, "converged": False,
             "lower_bound": None, "status": "error"}]
    cli.write_summary(rows, tmp_path / "s.csv")
    assert cli.read_summary(tmp_path / "s.csv") == rows


def test_diagram_single_homoclinic(tmp_path):
    rows = cli.energy_diagram([{"b": 0.0, "m_b": 2.9, "T_b": math.inf}])
    assert len(rows) == 1
    assert rows[0]["T_b"] == math.inf and rows[0]["minus_b"] == 0.0
    cli.write_diagram(rows, tmp_path / "d.csv")
    assert "inf" in (tmp_path / "d.csv").read_text().splitlines()[1]


def test_diagram_sweep_order():
    summary = [{"b": b, "m_b": 1.0 - b, "T_b": 2.0 + b} for b in (0.75, 0.0, 0.5, 0.25)]
    rows = cli.energy_diagram(summary)
    assert len(rows) == 4
    bs = [r["b"] for r in rows]
    assert bs == sorted(bs)
    mb = [r["minus_b"] for r in rows]
    assert all(x > y for x, y in zip(mb, mb[1:]))
    # failed levels carry no action and are left out
    assert len(cli.energy_diagram(summary + [{"b": 0.9, "m_b": None, "T_b": None}])) == 4


def test_main_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
