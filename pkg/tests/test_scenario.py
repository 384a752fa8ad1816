import json
import os

import pandas as pd
import pytest

import GridSentry
from ProtectionHub.processors.decision_logic import ALERT, DETECTED, TRIP
from ProtectionHub.processors.hypothesis_engine import COMBINED, CYBER_ATTACK, FAULT, NORMAL, UNRESOLVED, Diagnosis
from ProtectionHub.scenarios.builtin_cases import case_config, list_cases, load_case
from ProtectionHub.scenarios.plotting import PlotError, emit_plot, event_spans, read_trace
from ProtectionHub.scenarios.scenario_config import ConfigError, load_scenario, parse_scenario, with_overrides
from ProtectionHub.scenarios.scenario_runner import (
    DECISION_COLUMNS, EXIT_CONFIG_ERROR, EXIT_OK, EXIT_UNRESOLVED, TRACE_COLUMNS, RunReport, _segments,
    batch_exit_code, resolve_source, run_batch, run_scenario,
)
from tests.conftest import short_case


def _write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return str(path)


@pytest.fixture
def quiet_run(microgrid_data):
    return with_overrides(microgrid_data, duration=0.2, name="quiet")


def test_builtin_catalog():
    cases = list_cases()
    assert [name for name, _, _ in cases] == ["case1", "case2", "case3", "case4"]
    descriptions = dict((name, description) for name, description, _ in cases)
    assert "Simultaneous" in descriptions["case3"]
    fault = [e for e in dict((n, ev) for n, _, ev in cases)["case4"] if e["kind"] == "SLG_FAULT"][0]
    assert (fault["start"], fault["end"]) == (2.55, 2.8)
    config = load_case("case3")
    assert config.name == "case3"
    assert len(config.schedule) == 2
    assert config.duration == 5.0
    with pytest.raises(ConfigError) as error:
        case_config("case9")
    assert error.value.field_path == "case"


def test_show_case_output_parses_back(capsys):
    assert GridSentry.main(["show-case", "case2"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    config = parse_scenario(data)
    assert config.name == "case2"
    assert [event.kind for event in config.schedule] == ["SLG_FAULT"]
    assert config.expectations.decisions == ("TRIP",)


@pytest.mark.parametrize("mutate, field_path", [
    (lambda d: d.update(bogus=1), ""),
    (lambda d: d.pop("duration"), "duration"),
    (lambda d: d["network"]["devices"][1].update(to="B9"), "network.devices[1].to"),
    (lambda d: d["network"]["devices"][0].update(flavour="x"), "network.devices[0]"),
    (lambda d: d.update(events=[{"kind": "CT_ATTACK", "start": 0.1, "end": 0.2, "targets": ["MU9.IA"],
                                 "alpha": 3.0}]), "events[0].targets"),
    (lambda d: d.update(events=[{"kind": "SLG_FAULT", "start": 0.1, "end": 0.2, "targets": ["BX.A"],
                                 "r_f": 0.01}]), "events[0].targets"),
    (lambda d: d.update(events=[{"kind": "SLG_FAULT", "start": 4.0, "end": 6.0, "targets": ["BM.A"],
                                 "r_f": 0.01}]), "events[0].end"),
    (lambda d: d["thresholds"].update(t_d=0.2), "thresholds"),
    (lambda d: d["thresholds"].update(c_min=1.5), "thresholds"),
    (lambda d: d.update(initial="hot"), "initial"),
    (lambda d: d.update(noise_sigma="loud"), "noise_sigma"),
    (lambda d: d["merging_units"][0].update(zone="NOWHERE"), "merging_units"),
])
def test_invalid_scenarios_are_rejected(microgrid_data, mutate, field_path):
    data = with_overrides(microgrid_data)
    mutate(data)
    with pytest.raises(ConfigError) as error:
        parse_scenario(data)
    assert error.value.field_path == field_path


def test_json_syntax_error_carries_line_number(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "name": "broken",\n  "duration": ,\n  "events": []\n}\n')
    with pytest.raises(ConfigError) as error:
        load_scenario(str(path))
    assert error.value.line == 3
    assert str(error.value).startswith("line 3: ")


def test_scenario_file_name_is_the_default_name(tmp_path, microgrid_data):
    data = with_overrides(microgrid_data)
    del data["name"]
    config = load_scenario(_write(tmp_path, data, "feeder_check.json"))
    assert config.name == "feeder_check"
    assert resolve_source("case1").name == "case1"
    with pytest.raises(ConfigError):
        resolve_source(str(tmp_path / "missing.json"))


def test_normal_operation_run(tmp_path, quiet_run):
    report = run_scenario(quiet_run, output_dir=str(tmp_path / "quiet"))
    assert report.summary["samples"] == 961
    assert report.summary["windows"] == 960
    assert report.summary["nu"] == 80
    assert report.summary["mean_confidence"] >= 0.99
    assert report.decisions == ()
    assert set(report.trace["verdict"]) == {NORMAL}
    assert len(report.timeline) == 1 and report.timeline[0]["windows"] == 960
    assert report.exit_code == EXIT_OK

    trace = pd.read_csv(report.files["trace"], keep_default_na=False)
    assert list(trace.columns) == TRACE_COLUMNS
    assert len(trace) == 960
    decisions = pd.read_csv(report.files["decisions"])
    assert list(decisions.columns) == DECISION_COLUMNS and decisions.empty
    with open(report.files["report"]) as handle:
        payload = json.load(handle)
    assert payload["name"] == "quiet"
    assert payload["exit_code"] == 0
    assert payload["summary"]["verdict_counts"][NORMAL] == 960
    assert "streams" not in report.files


def test_decimation_and_stream_dump(tmp_path, quiet_run):
    data = with_overrides(quiet_run, duration=0.1, dump_streams=True)
    report = run_scenario(data, output_dir=str(tmp_path / "decimated"), decimation=4)
    assert report.summary["windows"] == 120
    assert report.decimation == 4
    assert os.path.exists(report.files["streams"])
    with pytest.raises(ConfigError):
        run_scenario(data, output_dir=str(tmp_path / "bad"), decimation=0)


def test_runs_are_reproducible(tmp_path, quiet_run):
    data = short_case("case2", duration=0.15, shift=1.95)
    first = run_scenario(data, output_dir=str(tmp_path / "first"), seed=5)
    second = run_scenario(data, output_dir=str(tmp_path / "second"), seed=5)
    for name in ("trace", "decisions"):
        with open(first.files[name], "rb") as a, open(second.files[name], "rb") as b:
            assert a.read() == b.read()
    other = run_scenario(quiet_run, output_dir=str(tmp_path / "other"), seed=6)
    again = run_scenario(quiet_run, output_dir=str(tmp_path / "again"), seed=7)
    assert not other.trace["zeta"].equals(again.trace["zeta"])


def test_short_cyberattack_case(tmp_path):
    report = run_scenario(short_case("case1"), output_dir=str(tmp_path / "case1"))
    assert report.decisions[0].kind == ALERT
    assert report.decisions[0].event == "CT_ATTACK[0.1-0.5s]"
    assert CYBER_ATTACK in report.summary["verdict_counts"] and report.summary["verdict_counts"][CYBER_ATTACK] > 0
    row = report.latency[0]
    assert row.status == DETECTED
    assert 0.0 < row.latency < 0.1
    assert report.expectations["decision:ALERT"]["passed"]
    assert "MU4.IA" in report.decisions[0].suspects


def test_short_fault_case(tmp_path):
    report = run_scenario(short_case("case2"), output_dir=str(tmp_path / "case2"))
    trips = [d for d in report.decisions if d.kind == TRIP]
    assert trips and trips[0].zone == "CABLE2"
    assert report.latency[0].status == DETECTED
    assert report.latency[0].latency == pytest.approx(0.04, abs=0.01)
    assert report.expectations["decision:TRIP"]["passed"]
    assert report.latency[0].mean_confidence < 0.5


def test_segments_absorb_provisional_windows():
    diagnoses = [
        Diagnosis(0.1, NORMAL),
        Diagnosis(0.2, CYBER_ATTACK, provisional=True),
        Diagnosis(0.3, CYBER_ATTACK, ("MU4.IA",)),
        Diagnosis(0.4, CYBER_ATTACK, ("MU4.IA",)),
        Diagnosis(0.5, NORMAL),
    ]
    timeline = _segments(diagnoses)
    assert [s["verdict"] for s in timeline] == [NORMAL, CYBER_ATTACK, NORMAL]
    assert timeline[0]["end_s"] == 0.2 and timeline[0]["windows"] == 2
    assert timeline[1]["suspects"] == ["MU4.IA"]


def test_strict_mode_exit_code():
    def report(strict, *diagnoses):
        return RunReport(name="x", output_dir="", seed=1, decimation=1, trace=pd.DataFrame(),
                         diagnoses=diagnoses, decisions=(), latency=(), timeline=(), expectations={},
                         summary={}, strict=strict)

    assert report(True, Diagnosis(0.1, UNRESOLVED)).exit_code == EXIT_UNRESOLVED
    assert report(False, Diagnosis(0.1, UNRESOLVED)).exit_code == EXIT_OK
    assert report(True, Diagnosis(0.1, UNRESOLVED, provisional=True)).exit_code == EXIT_OK
    assert batch_exit_code({"a": (0, {}), "b": (3, {}), "c": (2, {})}) == EXIT_CONFIG_ERROR
    assert batch_exit_code({}) == EXIT_OK


def test_cli_run_and_plot(tmp_path, quiet_run):
    path = _write(tmp_path, with_overrides(quiet_run, duration=0.05))
    out = tmp_path / "cli"
    assert GridSentry.main(["run", path, "--out", str(out), "--plot", "--seed", "3"]) == EXIT_OK
    assert (out / "trace.csv").exists() and (out / "report.json").exists()
    assert (out / "trace.svg").read_text().lstrip().startswith("<?xml")
    assert GridSentry.main(["plot", str(out / "trace.csv"), "--output", str(tmp_path / "c.svg")]) == EXIT_OK
    assert (tmp_path / "c.svg").exists()


def test_cli_config_errors(tmp_path, microgrid_data):
    assert GridSentry.main(["run", "--case", "case9"]) == EXIT_CONFIG_ERROR
    assert GridSentry.main(["run"]) == EXIT_CONFIG_ERROR
    data = with_overrides(microgrid_data, extra=True)
    assert GridSentry.main(["run", _write(tmp_path, data)]) == EXIT_CONFIG_ERROR
    assert GridSentry.main(["list-cases"]) == EXIT_OK


def test_plot_rejects_incomplete_traces(tmp_path):
    path = tmp_path / "trace.csv"
    pd.DataFrame({"time_s": [0.1, 0.2], "confidence": [1.0, 0.5], "alert": [0, 0], "events": ["", ""]}).to_csv(
        path, index=False)
    with pytest.raises(PlotError, match="missing column 'trip'"):
        emit_plot(str(path))
    with pytest.raises(PlotError):
        read_trace(str(tmp_path / "absent.csv"))
    assert GridSentry.main(["plot", str(path)]) == 1


def test_event_spans():
    trace = pd.DataFrame({
        "time_s": [0.1, 0.2, 0.3, 0.4, 0.5],
        "events": ["", "A[0.2-0.3s]", "A[0.2-0.3s]|B[0.3-0.5s]", "B[0.3-0.5s]", "B[0.3-0.5s]"],
    })
    assert event_spans(trace) == [("A[0.2-0.3s]", 0.2, 0.3), ("B[0.3-0.5s]", 0.3, 0.5)]


def test_batch_runs_each_scenario_in_its_own_directory(tmp_path, quiet_run):
    first = _write(tmp_path, with_overrides(quiet_run, duration=0.03, name="one"), "one.json")
    second = _write(tmp_path, with_overrides(quiet_run, duration=0.03, name="two"), "two.json")
    outcomes = run_batch([first, second], output_root=str(tmp_path / "batch"), max_workers=2)
    assert {source: code for source, (code, _) in outcomes.items()} == {first: EXIT_OK, second: EXIT_OK}
    assert (tmp_path / "batch" / "one" / "trace.csv").exists()
    assert (tmp_path / "batch" / "two" / "report.json").exists()

    clash = _write(tmp_path, with_overrides(quiet_run, duration=0.03, name="one"), "clash.json")
    with pytest.raises(ConfigError):
        run_batch([first, clash], output_root=str(tmp_path / "batch"))


@pytest.mark.slow
@pytest.mark.parametrize("name", ["case1", "case2", "case3", "case4"])
def test_builtin_case_decisions(tmp_path, name):
    report = run_scenario(load_case(name), output_dir=str(tmp_path / name))
    decision_checks = {k: v for k, v in report.expectations.items() if k.startswith("decision:")}
    assert decision_checks and all(check["passed"] for check in decision_checks.values())
    assert report.summary["windows"] == 24000


def test_short_combined_case(tmp_path):
    report = run_scenario(short_case("case3"), output_dir=str(tmp_path / "case3"))
    kinds = {d.kind for d in report.decisions}
    assert {ALERT, TRIP} <= kinds
    assert [d.zone for d in report.decisions if d.kind == TRIP][0] == "CABLE2"
    inside = report.trace[(report.trace["time_s"] >= 0.15) & (report.trace["time_s"] < 0.5)]
    counts = inside["verdict"].value_counts()
    assert counts.idxmax() == COMBINED
    assert all(row.status == DETECTED for row in report.latency)


@pytest.mark.slow
def test_reduced_ratio_attack_with_late_fault(tmp_path):
    report = run_scenario(short_case("case4", duration=1.2), output_dir=str(tmp_path / "case4"))
    alert = next(d for d in report.decisions if d.kind == ALERT)
    trip = next(d for d in report.decisions if d.kind == TRIP)
    assert alert.time < 0.65 <= trip.time
    assert trip.zone == "CABLE2"
    latency = {row.kind: row for row in report.latency}
    assert latency["CT_ATTACK"].status == latency["SLG_FAULT"].status == DETECTED
    # a 20% ratio hides near current zero crossings, so the attack takes longer to confirm
    assert latency["CT_ATTACK"].latency > latency["SLG_FAULT"].latency
    after = report.trace[report.trace["time_s"] > 0.91]["verdict"]
    assert (after == CYBER_ATTACK).any()
    assert not after.isin([FAULT, COMBINED]).any()
