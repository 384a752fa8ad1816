"""
Alert/trip decisions from the confidence trace.

The accumulator A(t) is the left-rectangle integral of (1 - c) over the trailing
reset window W_r, in seconds. Crossing T_d confirms an anomaly: the prevailing
final verdict is mapped to decisions and the accumulator restarts from zero.
"""
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from ProtectionHub.processors.hypothesis_engine import (
    COMBINED, CYBER_ATTACK, FAULT, NORMAL, UNRESOLVED, Diagnosis,
)
from ProtectionHub.simulation.events import CT_ATTACK, SLG_FAULT
from ProtectionHub.utils.logging_utils import log_message

ALERT = "ALERT"
TRIP = "TRIP"
UNRESOLVED_ALARM = "UNRESOLVED"
DETECTED = "DETECTED"
MISSED = "MISSED"
CROSSING_SLACK = 1e-12

DEFAULT_MAPPING = {
    CYBER_ATTACK: (ALERT,),
    FAULT: (TRIP,),
    COMBINED: (ALERT, TRIP),
    UNRESOLVED: (UNRESOLVED_ALARM,),
}
EVENT_DECISIONS = {CT_ATTACK: ALERT, SLG_FAULT: TRIP}


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionConfig:
    t_d: float = 0.040
    w_r: float = 0.100
    mapping: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_MAPPING))

    def __post_init__(self):
        if not 0 < self.t_d < self.w_r:
            raise DecisionError(f"Need 0 < T_d < W_r, got T_d={self.t_d}, W_r={self.w_r}")


@dataclass(frozen=True)
class Decision:
    kind: str
    time: float
    verdict: str
    window_time: float
    latency: Optional[float] = None
    event: Optional[str] = None
    suspects: Tuple[str, ...] = ()
    zone: Optional[str] = None


@dataclass
class DecisionState:
    w_r: float
    time: float = 0.0
    area: float = 0.0
    contributions: deque = field(default_factory=deque)
    recent: deque = field(default_factory=deque)
    emitted: set = field(default_factory=set)
    last_anomaly: Optional[float] = None
    previous_c: Optional[float] = None

    def reset_area(self):
        self.contributions.clear()
        self.area = 0.0


def new_state(config: DecisionConfig = DecisionConfig(), start_time=0.0):
    return DecisionState(w_r=config.w_r, time=start_time)


def update_area(state: DecisionState, c, dt, time=None):
    """
    Add (1 - c) dt for the step ending at this window, with c taken at the
    step's left end (the previous window; the first window stands for itself).
    Contributions older than W_r drop out.
    """
    state.time = state.time + dt if time is None else time
    c = min(max(c, 0.0), 1.0)
    left = c if state.previous_c is None else state.previous_c
    state.previous_c = c
    amount = (1.0 - left) * dt
    state.contributions.append((state.time, amount))
    state.area += amount
    horizon = state.time - state.w_r + CROSSING_SLACK
    while state.contributions and state.contributions[0][0] <= horizon:
        state.area -= state.contributions.popleft()[1]
    state.area = min(max(state.area, 0.0), state.w_r)
    return state


def decide(state: DecisionState, diagnosis: Diagnosis, config: DecisionConfig = DecisionConfig()):
    """Decisions emitted at this window (possibly none)."""
    t = diagnosis.time
    if diagnosis.verdict != NORMAL:
        state.last_anomaly = t
        if not diagnosis.provisional:
            state.recent.append(diagnosis)
    while state.recent and state.recent[0].time <= t - config.w_r:
        state.recent.popleft()
    if state.emitted and (state.last_anomaly is None or t - state.last_anomaly >= config.w_r):
        state.emitted.clear()

    if state.area < config.t_d - CROSSING_SLACK:
        return []

    state.reset_area()
    prevailing = state.recent[-1] if state.recent else None
    verdict = prevailing.verdict if prevailing is not None else UNRESOLVED
    kinds = [k for k in config.mapping.get(verdict, (UNRESOLVED_ALARM,)) if k not in state.emitted]
    if not kinds:
        return []
    state.emitted.update(kinds)
    cause = prevailing or diagnosis
    decisions = [Decision(kind, t, verdict, cause.time, suspects=cause.suspects, zone=cause.zone) for kind in kinds]
    for decision in decisions:
        level = "WARNING" if decision.kind == UNRESOLVED_ALARM else "INFO"
        log_message(f"{decision.kind} at t={t:.6f}s for {verdict} ({cause.describe()})", level=level)
    return decisions


def run_decisions(confidences, diagnoses, dt, config: DecisionConfig = DecisionConfig()):
    """Feed a complete trace through the accumulator; returns every decision in time order."""
    state = new_state(config)
    decisions = []
    for c, diagnosis in zip(confidences, diagnoses):
        update_area(state, c, dt, time=diagnosis.time)
        decisions.extend(decide(state, diagnosis, config))
    return decisions


def attach_latencies(decisions, schedule):
    """Latency of each decision from the latest start of an event it answers."""
    attached = []
    for decision in decisions:
        started = [
            event for event in schedule
            if EVENT_DECISIONS.get(event.kind) == decision.kind and event.start <= decision.time
        ]
        if started:
            event = max(started, key=lambda e: e.start)
            decision = replace(decision, latency=decision.time - event.start, event=event.label())
        attached.append(decision)
    return attached


@dataclass(frozen=True)
class LatencyRow:
    event: str
    kind: str
    start: float
    end: float
    expected: str
    status: str
    decision_time: Optional[float]
    latency: Optional[float]
    mean_confidence: Optional[float]
    min_confidence: Optional[float]


def latency_report(decisions, schedule, times=None, confidences=None, config: DecisionConfig = DecisionConfig()):
    """One row per scheduled event: first answering decision inside [start, end + W_r], or MISSED."""
    rows = []
    for event in schedule:
        expected = EVENT_DECISIONS[event.kind]
        matches = [
            d for d in decisions
            if d.kind == expected and event.start <= d.time <= event.end + config.w_r
        ]
        first = min(matches, key=lambda d: d.time) if matches else None
        mean_c = min_c = None
        if times is not None and confidences is not None:
            times_arr, conf = np.asarray(times), np.asarray(confidences)
            inside = (times_arr >= event.start) & (times_arr < event.end)
            if inside.any():
                mean_c, min_c = float(conf[inside].mean()), float(conf[inside].min())
        if first is None:
            log_message(f"{event.label()} MISSED: no {expected} decision", level="WARNING")
        rows.append(LatencyRow(
            event=event.label(),
            kind=event.kind,
            start=event.start,
            end=event.end,
            expected=expected,
            status=DETECTED if first else MISSED,
            decision_time=first.time if first else None,
            latency=first.time - event.start if first else None,
            mean_confidence=mean_c,
            min_confidence=min_c,
        ))
    return rows
