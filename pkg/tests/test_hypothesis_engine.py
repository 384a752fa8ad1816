from dataclasses import replace

import numpy as np
import pytest

from ProtectionHub.estimation.dse_engine import EstimationResult
from ProtectionHub.estimation.measurement_model import SAMPLE_PERIOD
from ProtectionHub.processors import hypothesis_engine as he
from ProtectionHub.simulation.events import CT_ATTACK, SLG_FAULT, Event, EventSchedule

ATTACK = Event(CT_ATTACK, 0.02, 0.15, ("MU4.IA",), 3.0)
FAULT = Event(SLG_FAULT, 0.02, 0.15, ("BM.A",), 0.01)
# near phase-A load current peaks, away from zero crossings
STEADY_TIMES = (0.0512, 0.0762, 0.0929, 0.1179, 0.1346)


@pytest.fixture(scope="module")
def windows(microgrid, microgrid_model, window_factory):
    def run(*events):
        return window_factory(microgrid, microgrid_model, seed=13, schedule=EventSchedule(events), duration=0.2)
    return {
        "normal": run(),
        "attack": run(ATTACK),
        "fault": run(FAULT),
        "combined": run(ATTACK, FAULT),
    }


def _fake_result(ids, normalized, virtual=None):
    n = len(ids)
    return EstimationResult(
        x=np.zeros(1), converged=True, iterations=1, objective=0.0, zeta=0.0, nu=1, confidence=0.5,
        residuals=np.zeros(n), normalized=np.asarray(normalized, dtype=float), row_ids=tuple(ids),
        virtual=np.zeros(n, dtype=bool) if virtual is None else np.asarray(virtual),
    )


def test_threshold_config_validation():
    for bad in ({"c_min": 1.0}, {"c_min": 0.0}, {"k_max": 0}, {"max_outer": 0}, {"tol": 0.0},
                {"debounce_windows": -1}, {"max_outer": 6}):
        with pytest.raises(ValueError):
            he.ThresholdConfig(**bad)


def test_select_suspects_threshold_and_fallback():
    config = he.ThresholdConfig()
    result = _fake_result(["a", "a", "b", "c"], [1.0, 7.0, 4.0, 2.0])
    assert he.select_suspects(result, config) == ["a", "b"]
    quiet = _fake_result(["a", "b"], [0.4, 1.2])
    assert he.select_suspects(quiet, config) == ["b"]


def test_infer_zone_plurality_and_ties(microgrid_model):
    assert he.infer_zone(microgrid_model, ["MU2.IA", "MU3.IA", "MU4.IA"]) == "CABLE2"
    assert he.infer_zone(microgrid_model, ["MU4.IA", "MU1.IA"]) == "CABLE1"
    assert he.infer_zone(microgrid_model, []) is None


def test_untestable_hypotheses(microgrid, microgrid_model, windows):
    window = windows["normal"](0.05)
    with pytest.raises(he.UntestableHypothesis):
        he.test_cyberattack(microgrid_model, window, [])
    with pytest.raises(he.UntestableHypothesis):
        he.test_fault(microgrid_model, microgrid.network, window, None)
    with pytest.raises(he.UntestableHypothesis):
        he.test_combined(microgrid_model, microgrid.network, window, [], "CABLE2")
    with pytest.raises(he.UntestableHypothesis):
        he.test_cyberattack(microgrid_model, window, microgrid_model.channel_ids)


def test_normal_windows(microgrid, microgrid_model, windows):
    for t in STEADY_TIMES:
        _, diagnosis = he.classify_window(microgrid_model, microgrid.network, windows["normal"](t))
        assert diagnosis.verdict == he.NORMAL
        assert diagnosis.trail == ()
        assert not diagnosis.anomalous


def test_attack_windows(microgrid, microgrid_model, windows):
    for t in STEADY_TIMES:
        result, diagnosis = he.classify_window(microgrid_model, microgrid.network, windows["attack"](t))
        assert result.confidence < 0.8
        assert diagnosis.verdict == he.CYBER_ATTACK
        assert "MU4.IA" in diagnosis.suspects
        assert diagnosis.post_confidence >= 0.99
        assert diagnosis.trail[-1].name == "H1" and diagnosis.trail[-1].status == he.ACCEPTED


def test_fault_windows(microgrid, microgrid_model, windows):
    for t in STEADY_TIMES:
        _, diagnosis = he.classify_window(microgrid_model, microgrid.network, windows["fault"](t))
        assert diagnosis.verdict == he.FAULT
        assert diagnosis.zone == "CABLE2"
        assert diagnosis.post_confidence >= 0.99
        h1 = [o for o in diagnosis.trail if o.name == "H1"]
        assert h1 and all(o.status != he.ACCEPTED for o in h1)
        assert all(o.confidence is None or o.confidence < 0.8 for o in h1)
        assert diagnosis.trail[-1].name == "H2" and diagnosis.trail[-1].status == he.ACCEPTED


def test_combined_windows(microgrid, microgrid_model, windows):
    for t in STEADY_TIMES:
        _, diagnosis = he.classify_window(microgrid_model, microgrid.network, windows["combined"](t))
        assert diagnosis.verdict == he.COMBINED
        assert diagnosis.zone == "CABLE2"
        assert diagnosis.suspects == ("MU4.IA",)
        assert diagnosis.post_confidence >= 0.99
        statuses = {o.name: o.status for o in diagnosis.trail}
        assert statuses["H2"] == he.REJECTED and statuses["H3"] == he.ACCEPTED
        for outcome in diagnosis.trail:
            if outcome.name in ("H1", "H2"):
                assert outcome.confidence is None or outcome.confidence < 0.8
            else:
                assert outcome.confidence >= 0.99


def test_wrong_hypothesis_stays_below_threshold(microgrid, microgrid_model, windows):
    config = he.ThresholdConfig()
    for t in STEADY_TIMES:
        c_fault, _ = he.test_fault(microgrid_model, microgrid.network, windows["attack"](t), "CABLE2", config)
        assert c_fault < config.c_min
        c_attack, _ = he.test_cyberattack(microgrid_model, windows["fault"](t), ["MU4.IA"], config)
        assert c_attack < config.c_min


def _counting_solver(monkeypatch, failures=0):
    calls = []
    solve = he.wls_solve

    def counted(*args, **kwargs):
        calls.append(1)
        result = solve(*args, **kwargs)
        if len(calls) <= failures:
            return replace(result, converged=False, diagnostic="forced restart")
        return result

    monkeypatch.setattr(he, "wls_solve", counted)
    return calls


@pytest.mark.parametrize("family", ["normal", "attack", "fault", "combined"])
def test_estimations_per_window_are_bounded(monkeypatch, microgrid, microgrid_model, windows, family):
    config = he.ThresholdConfig()
    calls = _counting_solver(monkeypatch)
    for t in STEADY_TIMES:
        calls.clear()
        he.classify_window(microgrid_model, microgrid.network, windows[family](t), config=config)
        assert 1 <= len(calls) <= config.k_max + 3


def test_base_restarts_shorten_the_cyberattack_search(monkeypatch, microgrid, microgrid_model, windows):
    config = he.ThresholdConfig()
    calls = _counting_solver(monkeypatch, failures=config.max_outer - 1)
    _, diagnosis = he.classify_window(microgrid_model, microgrid.network, windows["combined"](STEADY_TIMES[0]),
                                      config=config)
    assert len(calls) <= config.k_max + 3
    assert len([o for o in diagnosis.trail if o.name == "H1"]) <= config.k_max + 1 - config.max_outer
    assert diagnosis.verdict == he.COMBINED


def test_engine_marks_windows_after_crossing_provisional(microgrid, microgrid_model, windows):
    engine = he.HypothesisEngine(microgrid_model, microgrid.network)
    at = windows["attack"]
    start = round(ATTACK.start / SAMPLE_PERIOD)
    diagnoses = [engine.classify(at(k * SAMPLE_PERIOD))[1] for k in range(start - 4, start + 5)]
    assert [d.provisional for d in diagnoses] == [False] * 4 + [True, True] + [False] * 3
    assert [d.verdict for d in diagnoses[:4]] == [he.NORMAL] * 4
    assert diagnoses[-1].verdict == he.CYBER_ATTACK
    assert engine.previous is not None and engine.previous.converged


def test_verdict_counts_and_describe():
    diagnoses = [he.Diagnosis(0.0, he.NORMAL), he.Diagnosis(0.1, he.FAULT, ("MU2.IA",), "CABLE2")]
    counts = he.verdict_counts(diagnoses)
    assert counts[he.NORMAL] == 1 and counts[he.FAULT] == 1 and counts[he.COMBINED] == 0
    assert diagnoses[1].describe() == "FAULT suspects=MU2.IA zone=CABLE2"
