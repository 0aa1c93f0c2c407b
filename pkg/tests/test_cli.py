"""Command-line interface: commands, exit codes, file emission."""
import json
from dataclasses import replace
from pathlib import Path

import pytest

from gridarb.cli import main
from gridarb.model import instance_to_json

from conftest import make_two_bus


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / "two_bus.json"
    path.write_text(instance_to_json(make_two_bus()))
    return path


def test_clear_day(instance_file, tmp_path, capsys):
    out = tmp_path / "dispatch.csv"
    code = main(["clear-day", "--instance", str(instance_file),
                 "--storage-bus", "2", "--out", str(out)])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["storage_profit"]["0"] == pytest.approx(600.0, abs=1e-4)
    assert out.exists()
    # refuses to overwrite without --force
    assert main(["clear-day", "--instance", str(instance_file),
                 "--storage-bus", "2", "--out", str(out)]) == 1
    assert main(["clear-day", "--instance", str(instance_file),
                 "--storage-bus", "2", "--out", str(out), "--force"]) == 0


def test_clear_day_dump_lp(instance_file, tmp_path):
    dump = tmp_path / "model.txt"
    assert main(["clear-day", "--instance", str(instance_file),
                 "--storage-bus", "2", "--dump-lp", str(dump)]) == 0
    text = dump.read_text()
    assert text.startswith("LP max") and "bal[" in text


def test_solve_strategic(instance_file, capsys):
    code = main(["solve-strategic", "--instance", str(instance_file),
                 "--storage-bus", "2", "--big-m", "200",
                 "--price-cap", "60"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["profit"] >= 600.0 - 1e-6
    assert doc["diagnostics"]["strong_duality_residual"] <= 1e-6


def test_usage_errors(instance_file):
    assert main(["clear-day", "--derate", "banana"]) == 1
    assert main(["clear-day", "--derate", "1.7"]) == 1
    assert main(["sweep-siting", "--buses", "", "--out", "/tmp/x"]) == 1
    assert main(["no-such-command"]) == 1


def test_infeasible_exit_code(tmp_path, capsys):
    base = make_two_bus()
    buses = (replace(base.buses[0], load_min=(500.0,) * 4,
                     load_max=(500.0,) * 4), base.buses[1])
    bad = replace(base, buses=buses)
    path = tmp_path / "bad.json"
    path.write_text(instance_to_json(bad))
    assert main(["clear-day", "--instance", str(path),
                 "--storage-bus", "2"]) == 2


def test_run_year_and_report(tmp_path, capsys):
    camp = tmp_path / "camp"
    code = main(["run-year", "--mode", "pc", "--days", "1", "--out",
                 str(camp)])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["failed_days"] == 0
    assert (camp / "summary.json").exists()
    assert (camp / "daily.csv").exists()
    assert (camp / "duration_curve.svg").exists()

    rep = tmp_path / "rep"
    assert main(["report", "--campaign", str(camp), "--out", str(rep)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert any("duration_curve.svg" in p for p in doc["written"])

    # rerunning the campaign without --force is a usage error
    assert main(["run-year", "--mode", "pc", "--days", "1", "--out",
                 str(camp)]) == 1
    assert main(["run-year", "--mode", "pc", "--days", "1", "--out",
                 str(camp), "--force"]) == 0


def test_sweep_congestion_cli(tmp_path, capsys):
    camp = tmp_path / "sweep"
    code = main(["sweep-congestion", "--mode", "pc", "--days", "1",
                 "--derate", "1.0,0.5", "--out", str(camp)])
    assert code == 0
    summary = json.loads((camp / "summary.json").read_text())
    assert set(summary["storage_bus_by_scenario"]) == {"derate=1",
                                                       "derate=0.5"}
