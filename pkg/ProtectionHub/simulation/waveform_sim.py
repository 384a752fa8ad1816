"""
Fixed-step trapezoidal simulation of the true network.

The true network is the monitored network plus one fault branch per scheduled
SLG fault, appended after the monitored devices so the monitored states stay a
prefix of the true state vector. An inactive fault branch has its internal row
replaced by i_f = 0; every distinct set of active faults is LU-factorized once.

A merging unit computes its neutral channel from its own phase samples, so the
neutral carries their noise and any CT manipulation.
"""
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from ProtectionHub.estimation.measurement_model import SAMPLE_PERIOD, ChannelKind, channel_rows
from ProtectionHub.models.device_models import ModelError, make_fault_branch, parse_node_phase
from ProtectionHub.models.network_model import (
    NetworkModel, assemble, consistent_rest_state, discretize, steady_state,
)
from ProtectionHub.simulation.events import CT_ATTACK, SLG_FAULT, EventSchedule, SimulationError
from ProtectionHub.utils.logging_utils import log_message

DEFAULT_NOISE_SIGMA = 0.0005
PIVOT_TOLERANCE = 1e-13


@dataclass(frozen=True, eq=False)
class SampleStream:
    mu_id: str
    channel_ids: Tuple[str, ...]
    channel_kinds: Tuple[ChannelKind, ...]
    period: float
    times: np.ndarray
    values: np.ndarray
    truth: np.ndarray
    derived_from: Tuple[Tuple[int, Tuple[int, ...]], ...] = ()

    def column(self, channel_id):
        try:
            return self.values[:, self.channel_ids.index(channel_id)]
        except ValueError:
            raise SimulationError(f"Stream {self.mu_id} has no channel '{channel_id}'") from None

    def rederive(self, values):
        """Derived columns recomputed as sums of the given phase samples."""
        values = values.copy()
        for column, members in self.derived_from:
            values[:, column] = values[:, list(members)].sum(axis=1)
        return values


@dataclass(frozen=True, eq=False)
class Trajectory:
    """True network states at every sample instant."""
    network: NetworkModel
    times: np.ndarray
    states: np.ndarray
    fault_names: Tuple[str, ...]
    active: np.ndarray


def build_truth_network(network: NetworkModel, schedule: EventSchedule):
    """Monitored devices followed by one fault branch per SLG event."""
    faults = []
    zones = {zone.zone_id: list(zone.members) for zone in network.zones}
    for k, event in enumerate(schedule.of_kind(SLG_FAULT)):
        for target in event.targets:
            node = parse_node_phase(target)
            if node not in network.node_index:
                raise SimulationError(f"SLG fault targets unknown node-phase '{target}'")
            owner = next(
                (network.zone_map[d.name] for d in network.devices if node in network.terminals_of(d.name)),
                None,
            )
            try:
                fault = make_fault_branch(node, event.parameter, name=f"fault:{node}#{k}")
            except ModelError as e:
                raise SimulationError(str(e)) from e
            zones[owner].append(fault.name)
            faults.append((fault, event))

    if not faults:
        return network, ()
    truth = assemble(
        list(network.devices) + [fault for fault, _ in faults],
        bindings=network.bindings,
        zones=[replace(zone, members=tuple(zones[zone.zone_id])) for zone in network.zones],
        breakers=network.breakers,
        frequency_hz=network.frequency_hz,
        v_base=network.v_base,
        s_base=network.s_base,
    )
    return truth, tuple(faults)


def _equations_for(truth: NetworkModel, faults, active):
    """Truth equations with every inactive fault branch opened (i_f = 0)."""
    eq = truth.equations
    rows, values = [], []
    for (fault, _), on in zip(faults, active):
        if on:
            continue
        row = eq.row_labels.index(f"{fault.name}:linear0")
        opened = np.zeros(truth.state_count)
        opened[truth.internal_indices(fault.name)[0]] = 1.0
        rows.append(row)
        values.append(opened)
    return eq.with_rows_replaced(rows, values) if rows else eq


def simulate_states(network: NetworkModel, schedule: EventSchedule, duration, h=SAMPLE_PERIOD, initial="steady"):
    if not duration > 0:
        raise SimulationError(f"Duration must be positive, got {duration}")
    truth, faults = build_truth_network(network, schedule)
    if not truth.equations.is_linear:
        raise SimulationError("The simulator integrates linear networks only")

    steps = int(round(duration / h))
    times = np.arange(steps + 1) * h
    active = np.zeros((steps + 1, len(faults)), dtype=bool)
    for j, (_, event) in enumerate(faults):
        first, last = event.sample_span(h)
        active[max(first, 0):max(min(last, steps + 1), 0), j] = True

    controls = truth.control_series(times)
    initial_eq = _equations_for(truth, faults, active[0])
    if initial == "steady":
        x = steady_state(truth, 0.0, h=h, equations=initial_eq)
    elif initial == "rest":
        x = consistent_rest_state(truth, 0.0, equations=initial_eq)
    else:
        raise SimulationError(f"Unknown initial condition '{initial}', expected 'steady' or 'rest'")

    factored = {}
    states = np.empty((steps + 1, truth.state_count))
    states[0] = x
    for k in range(1, steps + 1):
        key = tuple(active[k])
        if key not in factored:
            form = discretize(truth, h, equations=_equations_for(truth, faults, key))
            lu, piv = scipy.linalg.lu_factor(form.M1, check_finite=False)
            pivots = np.abs(np.diag(lu))
            if pivots.min() <= PIVOT_TOLERANCE * max(pivots.max(), 1.0):
                raise SimulationError(
                    f"Singular companion matrix at step {k} (t={times[k]:.6f}s, active faults {key})"
                )
            factored[key] = (form, (lu, piv))
            log_message(f"Factorized topology {key} at t={times[k]:.6f}s", level="DEBUG")
        form, factor = factored[key]
        states[k] = scipy.linalg.lu_solve(factor, form.rhs(states[k - 1], controls[k], controls[k - 1]),
                                          check_finite=False)

    return Trajectory(truth, times, states, tuple(fault.name for fault, _ in faults), active)


def apply_ct_attack(stream: SampleStream, channels, factor, interval):
    """
    Scale the targeted current channels by `factor` inside [start, end) and
    recompute the derived channels built on them; the truth copy is untouched.
    """
    if not factor > 0:
        raise SimulationError(f"CT ratio factor must be positive, got {factor}")
    start, end = interval
    span_end = stream.times[-1] + stream.period
    if start < stream.times[0] - 1e-12 or end > span_end + 1e-12 or not start < end:
        raise SimulationError(f"Attack interval [{start}, {end}] outside stream span [{stream.times[0]}, {span_end}]")
    columns = []
    for channel_id in channels:
        if channel_id not in stream.channel_ids:
            raise SimulationError(f"Stream {stream.mu_id} has no channel '{channel_id}'")
        k = stream.channel_ids.index(channel_id)
        if stream.channel_kinds[k] != ChannelKind.ACTUAL_CURRENT:
            raise SimulationError(f"CT attacks apply to current channels only, '{channel_id}' is {stream.channel_kinds[k].value}")
        columns.append(k)
    first, last = round(start / stream.period), round(end / stream.period)
    offset = round(stream.times[0] / stream.period)
    rows = slice(max(first - offset, 0), max(last - offset, 0))
    values = stream.values.copy()
    values[rows, columns] = values[rows, columns] * factor
    return replace(stream, values=stream.rederive(values))


def _derived_columns(channel_defs):
    """(derived column, member phase columns) for one merging unit's channels."""
    phases = {
        (d.device, d.terminal): k for k, d in enumerate(channel_defs) if d.kind == ChannelKind.ACTUAL_CURRENT
    }
    derived = []
    for k, definition in enumerate(channel_defs):
        if definition.kind != ChannelKind.DERIVED:
            continue
        members = tuple(phases.get(member) for member in definition.members)
        if None in members:
            raise SimulationError(f"{definition.channel_id} sums currents its merging unit does not meter")
        derived.append((k, members))
    return tuple(derived)


def simulate(network: NetworkModel, schedule: EventSchedule, duration, noise_sigma=DEFAULT_NOISE_SIGMA,
             seed=0, channel_defs=(), initial="steady", h=SAMPLE_PERIOD):
    """
    Simulate, measure, add Gaussian noise and apply CT attacks.
    Returns one SampleStream per merging unit, in channel definition order.
    """
    if noise_sigma < 0:
        raise SimulationError(f"Noise sigma must be non-negative, got {noise_sigma}")
    channel_defs = tuple(channel_defs)
    if not channel_defs:
        raise SimulationError("No measurement channels defined")
    rows = channel_rows(network, channel_defs)
    known = {d.channel_id for d in channel_defs}
    for event in schedule.of_kind(CT_ATTACK):
        unknown = sorted(set(event.targets) - known)
        if unknown:
            raise SimulationError(f"CT attack targets unknown channels: {', '.join(unknown)}")

    trajectory = simulate_states(network, schedule, duration, h=h, initial=initial)
    base = trajectory.states[:, :network.state_count]
    truth_values = np.column_stack([
        base @ row.y + row.c + (np.einsum("ti,ij,tj->t", base, row.f, base) if row.f is not None else 0.0)
        for row in rows
    ])

    derived = ChannelKind.DERIVED
    scale = np.array([0.0 if d.kind == derived else noise_sigma for d in channel_defs])
    rng = np.random.default_rng(seed)
    noisy = truth_values + rng.standard_normal(truth_values.shape) * scale

    streams = []
    for mu_id in dict.fromkeys(d.mu_id for d in channel_defs):
        columns = [k for k, d in enumerate(channel_defs) if d.mu_id == mu_id]
        stream = SampleStream(
            mu_id=mu_id,
            channel_ids=tuple(channel_defs[k].channel_id for k in columns),
            channel_kinds=tuple(channel_defs[k].kind for k in columns),
            period=h,
            times=trajectory.times,
            values=noisy[:, columns],
            truth=truth_values[:, columns],
            derived_from=_derived_columns([channel_defs[k] for k in columns]),
        )
        streams.append(replace(stream, values=stream.rederive(stream.values)))

    for event in schedule.of_kind(CT_ATTACK):
        for i, stream in enumerate(streams):
            targeted = [cid for cid in event.targets if cid in stream.channel_ids]
            if targeted:
                end = min(event.end, stream.times[-1] + h)
                if event.start < end:
                    streams[i] = apply_ct_attack(stream, targeted, event.parameter, (event.start, end))

    log_message(
        f"Simulated {duration:g}s ({len(trajectory.times)} samples, {len(channel_defs)} channels, "
        f"{len(schedule)} events, seed {seed})",
        level="INFO",
    )
    return tuple(streams)


def stack_streams(streams, column_ids):
    """Sample matrix (samples x channels) in `column_ids` order, plus the shared time axis."""
    lookup = {}
    for stream in streams:
        for k, channel_id in enumerate(stream.channel_ids):
            lookup[channel_id] = (stream, k)
    missing = [cid for cid in column_ids if cid not in lookup]
    if missing:
        raise SimulationError(f"No stream carries channels: {', '.join(missing)}")
    times = streams[0].times
    values = np.column_stack([lookup[cid][0].values[:, lookup[cid][1]] for cid in column_ids])
    return times, values


def write_stream_csv(streams, path):
    frames = []
    for stream in streams:
        count, width = stream.values.shape
        frames.append(pd.DataFrame({
            "time_s": np.repeat(stream.times, width),
            "mu_id": stream.mu_id,
            "channel_id": np.tile(np.array(stream.channel_ids, dtype=object), count),
            "value_pu": stream.values.reshape(-1),
            "truth_pu": stream.truth.reshape(-1),
        }))
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.9g")
    log_message(f"Wrote raw streams to {path}", level="DEBUG")
    return path
