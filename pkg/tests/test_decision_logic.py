import numpy as np
import pytest

from ProtectionHub.processors.decision_logic import (
    ALERT, DETECTED, MISSED, TRIP, UNRESOLVED_ALARM, Decision, DecisionConfig, DecisionError, attach_latencies,
    decide, latency_report, new_state, run_decisions, update_area,
)
from ProtectionHub.processors.hypothesis_engine import COMBINED, CYBER_ATTACK, FAULT, NORMAL, Diagnosis
from ProtectionHub.simulation.events import CT_ATTACK, SLG_FAULT, Event, EventSchedule

DT = 1.0 / 4800.0


def _trace(segments):
    """[(verdict, c, seconds)] -> (confidences, diagnoses) at DT spacing starting at DT."""
    confidences, diagnoses = [], []
    k = 0
    for verdict, c, seconds in segments:
        for _ in range(int(round(seconds / DT))):
            k += 1
            confidences.append(c)
            diagnoses.append(Diagnosis(k * DT, verdict, ("MU4.IA",) if verdict != NORMAL else ()))
    return confidences, diagnoses


def test_config_validation():
    with pytest.raises(DecisionError):
        DecisionConfig(t_d=0.1, w_r=0.1)
    with pytest.raises(DecisionError):
        DecisionConfig(t_d=0.0)


@pytest.mark.parametrize("c, crossing", [(0.0, 0.040), (0.5, 0.080)])
def test_crossing_times(c, crossing):
    confidences, diagnoses = _trace([(FAULT, c, 0.3)])
    decisions = run_decisions(confidences, diagnoses, DT)
    assert decisions[0].kind == TRIP
    assert decisions[0].time == pytest.approx(crossing, abs=DT)


def test_normal_trace_emits_nothing():
    confidences, diagnoses = _trace([(NORMAL, 0.97, 1.0)])
    assert run_decisions(confidences, diagnoses, DT) == []


def test_accumulator_is_bounded_by_reset_window():
    config = DecisionConfig()
    state = new_state(config)
    areas = []
    for k in range(1, 4800):
        update_area(state, 0.0, DT, time=k * DT)
        areas.append(state.area)
    assert max(areas) <= config.w_r
    assert areas[-1] == pytest.approx(config.w_r, abs=2 * DT)
    update_area(state, 1.7, DT)
    assert state.area <= config.w_r


def test_area_uses_left_rectangle():
    state = new_state(DecisionConfig())
    update_area(state, 0.25, DT, time=DT)
    assert state.area == pytest.approx(0.75 * DT)
    update_area(state, 1.0, DT, time=2 * DT)
    assert state.area == pytest.approx(1.5 * DT)
    update_area(state, 0.0, DT, time=3 * DT)
    assert state.area == pytest.approx(1.5 * DT)
    update_area(state, 0.0, DT, time=4 * DT)
    assert state.area == pytest.approx(2.5 * DT)


def test_same_decision_is_not_repeated_while_anomaly_persists():
    confidences, diagnoses = _trace([(FAULT, 0.0, 0.5)])
    decisions = run_decisions(confidences, diagnoses, DT)
    assert [d.kind for d in decisions] == [TRIP]


def test_decision_rearms_after_quiet_reset_window():
    confidences, diagnoses = _trace([(FAULT, 0.0, 0.1), (NORMAL, 1.0, 0.2), (FAULT, 0.0, 0.1)])
    decisions = run_decisions(confidences, diagnoses, DT)
    assert [d.kind for d in decisions] == [TRIP, TRIP]
    # the first anomalous window still integrates the quiet c from its left end
    assert decisions[1].time == pytest.approx(0.3 + DT + 0.04, abs=DT)


def test_mapping_for_combined_and_escalation():
    confidences, diagnoses = _trace([(COMBINED, 0.0, 0.05)])
    kinds = sorted(d.kind for d in run_decisions(confidences, diagnoses, DT))
    assert kinds == [ALERT, TRIP]

    confidences, diagnoses = _trace([(FAULT, 0.0, 0.05), (COMBINED, 0.0, 0.1)])
    decisions = run_decisions(confidences, diagnoses, DT)
    assert [d.kind for d in decisions] == [TRIP, ALERT]
    assert decisions[1].verdict == COMBINED


def test_provisional_only_anomaly_raises_unresolved_alarm():
    config = DecisionConfig()
    state = new_state(config)
    emitted = []
    for k in range(1, 200):
        update_area(state, 0.0, DT, time=k * DT)
        emitted.extend(decide(state, Diagnosis(k * DT, CYBER_ATTACK, provisional=True), config))
    assert [d.kind for d in emitted] == [UNRESOLVED_ALARM]


def test_cyber_attack_maps_to_alert():
    confidences, diagnoses = _trace([(NORMAL, 1.0, 0.1), (CYBER_ATTACK, 0.45, 0.3)])
    decisions = run_decisions(confidences, diagnoses, DT)
    assert [d.kind for d in decisions] == [ALERT]
    assert decisions[0].suspects == ("MU4.IA",)
    assert decisions[0].time == pytest.approx(0.1 + DT + 0.04 / 0.55, abs=DT)


def test_latencies_and_report():
    schedule = EventSchedule((
        Event(CT_ATTACK, 0.1, 0.4, ("MU4.IA",), 3.0),
        Event(SLG_FAULT, 0.2, 0.3, ("BM.A",), 0.01),
        Event(SLG_FAULT, 0.45, 0.5, ("BM.A",), 0.01),
    ))
    decisions = attach_latencies([
        Decision(ALERT, 0.17, CYBER_ATTACK, 0.16),
        Decision(TRIP, 0.235, FAULT, 0.2),
    ], schedule)
    assert decisions[0].latency == pytest.approx(0.07)
    assert decisions[0].event == "CT_ATTACK[0.1-0.4s]"
    assert decisions[1].latency == pytest.approx(0.035)

    times = np.arange(1, 2400) * DT
    confidences = np.where((times >= 0.1) & (times < 0.4), 0.4, 1.0)
    rows = latency_report(decisions, schedule, times, confidences)
    assert [row.status for row in rows] == [DETECTED, DETECTED, MISSED]
    assert rows[0].mean_confidence == pytest.approx(0.4)
    assert rows[2].latency is None and rows[2].decision_time is None
