import csv
import json
from dataclasses import replace

import pytest

from wsnsync.cli import CSV_HEADER, TABLE_HEADER, emit_report, main
from wsnsync.scenario import Scenario, ScenarioError, dump_scenario, load_scenario, parse_scenario


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.scenario"
    f.write_text("")
    sc = load_scenario(f)
    assert sc == Scenario()
    assert sc.n_peripherals == 1 and sc.sync.rate_hz == 30.0 and sc.duration_s == 1800.0


def test_too_many_peripherals_mentions_limit():
    with pytest.raises(ScenarioError, match="8"):
        parse_scenario("n_peripherals = 9")


def test_negative_window_rejected():
    with pytest.raises(ScenarioError, match="window_interval_s"):
        parse_scenario("sync.window_interval_s = -1")


@pytest.mark.parametrize("text", ["bogus = 1", "radio.nope = 2", "peripheral.1.x = 3", "no equals sign"])
def test_unknown_keys_and_syntax_rejected(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_sections_and_overrides():
    sc = parse_scenario("""
        n_peripherals = 2
        [radio]
        busy_loss_prob = 0.0   # lossless
        [peripheral.2]
        ppm_offset = 5.0
    """)
    assert sc.radio.busy_loss_prob == 0.0
    assert sc.peripheral_config(1).ppm_offset == -3.6
    assert sc.peripheral_config(2).ppm_offset == 5.0


def test_dump_roundtrip():
    sc = replace(parse_scenario("n_peripherals = 3\nperipheral.3.ppm_offset = 1.5\nsync.window_interval_s = 60"),
                 seed=99)
    assert parse_scenario(dump_scenario(sc)) == sc
    assert parse_scenario(dump_scenario(Scenario())) == Scenario()


def test_header_only_report(tmp_path):
    path = emit_report([], tmp_path / "r.csv")
    assert path.read_text().splitlines() == [",".join(CSV_HEADER)]
    assert CSV_HEADER == ["window_s", "min_us", "q1_us", "median_us", "q3_us", "max_us", "n",
                          "energy_mJ_per_h", "theory_max_us"]


def test_run_writes_outputs(tmp_path, capsys):
    f = tmp_path / "s.scenario"
    f.write_text("duration_s = 2\ntrace = true\n")
    assert main(["run", str(f), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["seed"] == 3 and doc["n_samples"] > 0
    rows = list(csv.reader((tmp_path / "o" / "run.csv").open()))
    assert rows[0] == CSV_HEADER and len(rows) == 2
    assert (tmp_path / "o" / "trace.tsv").read_text()
    assert parse_scenario((tmp_path / "o" / "effective.scenario").read_text()).seed == 3


def test_seed_env_fallback(tmp_path, monkeypatch):
    f = tmp_path / "s.scenario"
    f.write_text("duration_s = 1\n")
    monkeypatch.setenv("WSN_SYNC_SEED", "17")
    assert main(["run", str(f), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["seed"] == 17
    assert main(["run", str(f), "--out", str(tmp_path), "--seed", "5"]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["seed"] == 5


def test_config_error_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.scenario"
    f.write_text("n_peripherals = 9\n")
    assert main(["run", str(f), "--out", str(tmp_path)]) == 2
    assert "n_peripherals" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.scenario")]) == 2


def test_runtime_error_exit_code(tmp_path):
    f = tmp_path / "s.scenario"
    f.write_text("duration_s = 1\n")
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", str(f), "--out", str(blocker)]) == 3


def test_sweep_subcommand(tmp_path):
    f = tmp_path / "s.scenario"
    f.write_text("duration_s = 12\n")
    assert main(["sweep", str(f), "--windows", "0,5", "--no-imu", "--workers", "1",
                 "--out", str(tmp_path), "--format", "tsv"]) == 0
    rows = [line.split("\t") for line in (tmp_path / "sweep.tsv").read_text().splitlines()]
    assert rows[0] == CSV_HEADER and [r[0] for r in rows[1:]] == ["0.0", "5.0"]


def test_short_reproduce_check_fails_with_exit_4(tmp_path, capsys):
    code = main(["reproduce", "--duration", "20", "--workers", "1", "--check",
                 "--skip-simulated-energy", "--out", str(tmp_path)])
    assert code == 4
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" in out
    assert list(csv.reader((tmp_path / "table1.csv").open()))[0] == TABLE_HEADER
    fig = list(csv.reader((tmp_path / "fig3.csv").open()))
    assert fig[0] == CSV_HEADER and fig[-1][0] == "imu" and len(fig) == 9
    assert (tmp_path / "fig3_plot.dat").exists()


def test_dump_defaults(tmp_path):
    assert main(["dump-defaults", "--out", str(tmp_path / "d.scenario")]) == 0
    assert load_scenario(tmp_path / "d.scenario") == Scenario()
