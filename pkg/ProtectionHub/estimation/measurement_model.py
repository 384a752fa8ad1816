"""
Measurement model over a two-sample estimation window.

Window layout: the network state at t- = t - h followed by the state at t, and
the controls [u(t-), u(t)]. Every measurement channel contributes one row per
window sample; model physics enters as virtual rows with target value zero:

  * algebraic network rows (KCL, source pins, resistive branches) at both samples,
  * one trapezoidal row per differential network row linking the two samples,
        (A_x/2 + A_d/h) x(t) + (A_x/2 - A_d/h) x(t-) + A_u (u(t) + u(t-))/2 + c = 0.

h(x) = H x + x' F x + U u + C, row by row. Virtual rows are scaled to a largest
state coefficient of one before weighting.

Degrees of freedom: nu = (enabled rows, both samples and virtual rows) - (window states).
"""
import functools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from ProtectionHub.models.device_models import GROUND, PHASE_ANGLES, NodePhase, parse_node_phase
from ProtectionHub.models.network_model import NetworkModel
from ProtectionHub.utils.logging_utils import log_message

SAMPLES_PER_CYCLE = 80
SAMPLE_PERIOD = 1.0 / (60.0 * SAMPLES_PER_CYCLE)
NU_CONVENTION = "enabled rows over both window samples plus virtual rows, minus window states"


class MeasurementError(Exception):
    pass


class ObservabilityError(MeasurementError):
    pass


class ChannelKind(str, Enum):
    ACTUAL_CURRENT = "ACTUAL_CURRENT"
    ACTUAL_VOLTAGE = "ACTUAL_VOLTAGE"
    VIRTUAL = "VIRTUAL"
    DERIVED = "DERIVED"
    PSEUDO_POWER = "PSEUDO_POWER"


SIGMA_CLASSES = {
    ChannelKind.ACTUAL_CURRENT: 0.002,
    ChannelKind.ACTUAL_VOLTAGE: 0.002,
    ChannelKind.DERIVED: 0.004,
    ChannelKind.VIRTUAL: 1e-5,
    ChannelKind.PSEUDO_POWER: 0.05,
}


@dataclass(frozen=True)
class ChannelDef:
    channel_id: str
    mu_id: str
    kind: ChannelKind
    zone: Optional[str] = None
    device: Optional[str] = None
    terminal: Optional[NodePhase] = None
    node: Optional[NodePhase] = None
    members: Tuple[Tuple[str, NodePhase], ...] = ()
    sigma: Optional[float] = None

    @property
    def declared_sigma(self):
        return self.sigma if self.sigma is not None else SIGMA_CLASSES[self.kind]


@dataclass(frozen=True)
class MergingUnitSpec:
    """
    One merging unit metering a three-phase device at one of its terminal buses.
    Device names are expanded per phase as '<device>.<phase>'.
    """
    mu_id: str
    zone: str
    device: str
    terminal: str
    voltage_node: str
    phases: Tuple[str, ...] = ("A", "B", "C")
    power: bool = False


def expand_merging_unit(spec: MergingUnitSpec):
    """Channels <MU>.I<phase>, <MU>.IN (derived neutral), <MU>.V<phase> and optional <MU>.P<phase>."""
    channels = []
    members = []
    for phase in spec.phases:
        device = f"{spec.device}.{phase}"
        terminal = NodePhase(spec.terminal, phase)
        members.append((device, terminal))
        channels.append(ChannelDef(f"{spec.mu_id}.I{phase}", spec.mu_id, ChannelKind.ACTUAL_CURRENT,
                                   zone=spec.zone, device=device, terminal=terminal))
    channels.append(ChannelDef(f"{spec.mu_id}.IN", spec.mu_id, ChannelKind.DERIVED,
                               zone=spec.zone, members=tuple(members)))
    for phase in spec.phases:
        channels.append(ChannelDef(f"{spec.mu_id}.V{phase}", spec.mu_id, ChannelKind.ACTUAL_VOLTAGE,
                                   zone=spec.zone, node=NodePhase(spec.voltage_node, phase)))
    if spec.power:
        for device, terminal in members:
            channels.append(ChannelDef(f"{spec.mu_id}.P{terminal.phase}", spec.mu_id, ChannelKind.PSEUDO_POWER,
                                       zone=spec.zone, device=device, terminal=terminal, node=terminal))
    return tuple(channels)


@dataclass(frozen=True, eq=False)
class SampleRow:
    """One channel expressed over the single-sample network state."""
    channel: ChannelDef
    y: np.ndarray
    f: Optional[np.ndarray]
    c: float

    def evaluate(self, x):
        value = self.y @ x[:len(self.y)] + self.c
        if self.f is not None:
            head = x[:len(self.y)]
            value = value + head @ self.f @ head
        return value


def _current_row(network: NetworkModel, device_name, terminal):
    try:
        k = network.device_index[device_name]
    except KeyError:
        raise MeasurementError(f"Channel references unknown device '{device_name}'") from None
    device = network.devices[k]
    terminals = network.terminals_of(device_name)
    terminal = parse_node_phase(terminal)
    if terminal not in terminals:
        raise MeasurementError(f"Device {device_name} has no terminal at {terminal}")
    j = terminals.index(terminal)
    if np.any(device.Y_equ1[j]) or np.any(device.D_eqxd1[j]):
        raise MeasurementError(f"Through current of {device_name} at {terminal} is not a pure state map")
    local_map = network.device_maps[k]
    y = np.zeros(network.state_count)
    for local, index in enumerate(local_map):
        if index >= 0:
            y[index] += device.Y_eqx1[j, local]
    return y, float(device.C_eqc1[j])


def _voltage_row(network: NetworkModel, node):
    node = parse_node_phase(node)
    if node == GROUND:
        raise MeasurementError("Ground reference voltage is not a measurement")
    y = np.zeros(network.state_count)
    try:
        y[network.voltage_index(node)] = 1.0
    except Exception:
        raise MeasurementError(f"Channel references unknown node-phase '{node}'") from None
    return y


def channel_rows(network: NetworkModel, channel_defs):
    """Per-sample rows of every channel over the network state."""
    rows = []
    seen = set()
    for definition in channel_defs:
        if definition.channel_id in seen:
            raise MeasurementError(f"Duplicate channel id '{definition.channel_id}'")
        seen.add(definition.channel_id)
        if not definition.declared_sigma > 0:
            raise MeasurementError(f"{definition.channel_id}: sigma must be positive")
        f, c = None, 0.0
        if definition.kind == ChannelKind.ACTUAL_CURRENT:
            y, c = _current_row(network, definition.device, definition.terminal)
        elif definition.kind == ChannelKind.ACTUAL_VOLTAGE:
            y = _voltage_row(network, definition.node)
        elif definition.kind == ChannelKind.DERIVED:
            if not definition.members:
                raise MeasurementError(f"{definition.channel_id}: derived channel without members")
            y = np.zeros(network.state_count)
            for device_name, terminal in definition.members:
                part, offset = _current_row(network, device_name, terminal)
                y += part
                c += offset
        elif definition.kind == ChannelKind.PSEUDO_POWER:
            current, offset = _current_row(network, definition.device, definition.terminal)
            if offset:
                raise MeasurementError(f"{definition.channel_id}: power rows need an offset-free current")
            voltage = _voltage_row(network, definition.node)
            f = 0.5 * (np.outer(voltage, current) + np.outer(current, voltage))
            y = np.zeros(network.state_count)
        else:
            raise MeasurementError(f"{definition.channel_id}: kind {definition.kind} cannot be defined by hand")
        rows.append(SampleRow(definition, y, f, c))
    return tuple(rows)


@dataclass(frozen=True, eq=False)
class SampleSystem:
    """Single-sample physics: A_x x + A_u u + A_d dx/dt + c (+ x'F x) = 0."""
    state_labels: Tuple[str, ...]
    control_count: int
    A_x: np.ndarray
    A_u: np.ndarray
    A_d: np.ndarray
    c: np.ndarray
    F_x: Dict[int, np.ndarray]
    row_labels: Tuple[str, ...]

    @classmethod
    def from_network(cls, network: NetworkModel):
        eq = network.equations
        if eq.F_u:
            raise MeasurementError("Quadratic control terms are not supported in virtual rows")
        return cls(network.state_labels, network.control_count, eq.A_x, eq.A_u, eq.A_d, eq.c,
                   dict(eq.F_x), eq.row_labels)

    @property
    def state_count(self):
        return len(self.state_labels)

    @cached_property
    def differential(self):
        return np.any(self.A_d != 0.0, axis=1)


@dataclass(frozen=True)
class MeasurementChannel:
    channel_id: str
    mu_id: Optional[str]
    kind: ChannelKind
    sample: int
    target_states: Tuple[int, ...]
    sigma: float
    y_row: np.ndarray
    d_row: np.ndarray
    u_row: np.ndarray
    f_matrix: Optional[np.ndarray]
    constant: float
    enabled: bool
    source_column: int


@dataclass(frozen=True)
class MeasurementWindow:
    """Raw samples (2 x columns) at t- and t, plus the window controls."""
    time: float
    samples: np.ndarray
    controls: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    network: NetworkModel
    system: SampleSystem
    sample_rows: Tuple[SampleRow, ...]
    h: float
    column_ids: Tuple[str, ...]
    state_labels: Tuple[str, ...]
    H: np.ndarray
    U: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: Dict[int, np.ndarray]
    sigma: np.ndarray
    row_ids: Tuple[str, ...]
    row_kinds: Tuple[ChannelKind, ...]
    samples: np.ndarray
    source_columns: np.ndarray
    enabled: np.ndarray
    masked_channels: frozenset = frozenset()
    masked_zones: Tuple[str, ...] = ()
    nu_convention: str = NU_CONVENTION
    channel_zones: Dict[str, Optional[str]] = field(default_factory=dict)

    @property
    def n(self):
        return self.H.shape[1]

    @property
    def m(self):
        return int(self.enabled.sum())

    @property
    def nu(self):
        return self.m - self.n

    @cached_property
    def active(self):
        return np.flatnonzero(self.enabled)

    @cached_property
    def quadratic_rows(self):
        """(position among enabled rows, F) for every enabled quadratic row."""
        return tuple((k, self.F[row]) for k, row in enumerate(self.active) if row in self.F)

    @cached_property
    def is_linear(self):
        return not self.quadratic_rows

    @cached_property
    def virtual(self):
        return np.array([kind == ChannelKind.VIRTUAL for kind in self.row_kinds], dtype=bool)

    @cached_property
    def channel_ids(self):
        """Maskable (non-virtual) channel ids in row order."""
        ids = []
        for row_id, kind in zip(self.row_ids, self.row_kinds):
            if kind != ChannelKind.VIRTUAL and row_id not in ids:
                ids.append(row_id)
        return tuple(ids)

    @cached_property
    def mu_of(self):
        return {row.channel.channel_id: row.channel.mu_id for row in self.sample_rows}

    @cached_property
    def dependents(self):
        """Phase current channel id -> derived channel ids computed from its samples."""
        sources = {
            (row.channel.mu_id, row.channel.device, row.channel.terminal): row.channel.channel_id
            for row in self.sample_rows if row.channel.kind == ChannelKind.ACTUAL_CURRENT
        }
        found = {}
        for row in self.sample_rows:
            if row.channel.kind != ChannelKind.DERIVED:
                continue
            for device, terminal in row.channel.members:
                source = sources.get((row.channel.mu_id, device, terminal))
                if source is not None:
                    found.setdefault(source, set()).add(row.channel.channel_id)
        return {source: frozenset(ids) for source, ids in found.items()}

    @cached_property
    def channels(self):
        """Row-level view of the model as MeasurementChannel records."""
        mu_of = self.mu_of
        records = []
        for i, row_id in enumerate(self.row_ids):
            records.append(MeasurementChannel(
                channel_id=row_id,
                mu_id=mu_of.get(row_id),
                kind=self.row_kinds[i],
                sample=int(self.samples[i]),
                target_states=tuple(int(j) for j in np.flatnonzero(self.H[i])),
                sigma=float(self.sigma[i]),
                y_row=self.H[i],
                d_row=self.D[i],
                u_row=self.U[i],
                f_matrix=self.F.get(i),
                constant=float(self.C[i]),
                enabled=bool(self.enabled[i]),
                source_column=int(self.source_columns[i]),
            ))
        return tuple(records)

    @cached_property
    def _z_gather(self):
        active = self.active
        measured = self.source_columns[active] >= 0
        return (np.flatnonzero(measured), self.samples[active][measured], self.source_columns[active][measured])

    def zone_of(self, channel_id):
        return self.channel_zones.get(channel_id)

    def assemble_z(self, window: MeasurementWindow):
        """Measurement vector over the enabled rows; virtual rows read zero."""
        positions, samples, columns = self._z_gather
        z = np.zeros(self.m)
        z[positions] = window.samples[samples, columns]
        return z


def _normalize(H_row, U_row, C_value, F_matrix):
    scale = np.max(np.abs(H_row)) if np.any(H_row) else np.max(np.abs(U_row), initial=0.0)
    if scale == 0:
        return H_row, U_row, C_value, F_matrix
    return H_row / scale, U_row / scale, C_value / scale, (None if F_matrix is None else F_matrix / scale)


def _build(network, system: SampleSystem, sample_rows, h, column_ids, disabled=frozenset(),
           masked_zones=(), masked_channels=frozenset()):
    N, mu = system.state_count, system.control_count
    n = 2 * N
    blocks = (slice(0, N), slice(N, 2 * N))
    controls = (slice(0, mu), slice(mu, 2 * mu))
    column_of = {cid: k for k, cid in enumerate(column_ids)}

    H, U, C, D, F = [], [], [], [], {}
    sigma, row_ids, kinds, samples, sources, enabled = [], [], [], [], [], []

    def add(row_id, kind, sample, sig, h_row, u_row, c_value, d_row, f_matrix, source, on):
        if f_matrix is not None:
            F[len(H)] = f_matrix
        H.append(h_row); U.append(u_row); C.append(c_value); D.append(d_row)
        sigma.append(sig); row_ids.append(row_id); kinds.append(kind)
        samples.append(sample); sources.append(source); enabled.append(on)

    for row in sample_rows:
        channel = row.channel
        if channel.channel_id not in column_of:
            raise MeasurementError(f"Channel {channel.channel_id} has no stream column")
        on = channel.channel_id not in disabled
        for s in (0, 1):
            h_row = np.zeros(n)
            h_row[blocks[s]] = row.y
            f_matrix = None
            if row.f is not None:
                f_matrix = np.zeros((n, n))
                f_matrix[blocks[s], blocks[s]] = row.f
            add(channel.channel_id, channel.kind, s, channel.declared_sigma, h_row, np.zeros(2 * mu),
                row.c, np.zeros(n), f_matrix, column_of[channel.channel_id], on)

    virtual_sigma = SIGMA_CLASSES[ChannelKind.VIRTUAL]
    differential = system.differential
    for r, label in enumerate(system.row_labels):
        if differential[r]:
            continue
        for s in (0, 1):
            h_row = np.zeros(n); h_row[blocks[s]] = system.A_x[r]
            u_row = np.zeros(2 * mu); u_row[controls[s]] = system.A_u[r]
            f_matrix = None
            if r in system.F_x:
                f_matrix = np.zeros((n, n)); f_matrix[blocks[s], blocks[s]] = system.F_x[r]
            h_row, u_row, c_value, f_matrix = _normalize(h_row, u_row, system.c[r], f_matrix)
            add(f"virtual:{label}@{s}", ChannelKind.VIRTUAL, s, virtual_sigma, h_row, u_row, c_value,
                np.zeros(n), f_matrix, -1, True)
    for r, label in enumerate(system.row_labels):
        if not differential[r]:
            continue
        if r in system.F_x:
            raise MeasurementError(f"Differential row {label} cannot carry quadratic terms")
        h_row = np.concatenate([0.5 * system.A_x[r] - system.A_d[r] / h, 0.5 * system.A_x[r] + system.A_d[r] / h])
        u_row = np.concatenate([0.5 * system.A_u[r], 0.5 * system.A_u[r]])
        d_row = np.concatenate([system.A_d[r], system.A_d[r]])
        h_row, u_row, c_value, _ = _normalize(h_row, u_row, system.c[r], None)
        add(f"virtual:{label}@dt", ChannelKind.VIRTUAL, -1, virtual_sigma, h_row, u_row, c_value, d_row, None, -1, True)

    labels = tuple(f"{label}@t-" for label in system.state_labels) + tuple(f"{label}@t" for label in system.state_labels)
    return MeasurementModel(
        network=network,
        system=system,
        sample_rows=tuple(sample_rows),
        h=h,
        column_ids=tuple(column_ids),
        state_labels=labels,
        H=np.array(H).reshape(len(H), n),
        U=np.array(U).reshape(len(U), 2 * mu),
        C=np.array(C, dtype=float),
        D=np.array(D).reshape(len(D), n),
        F=F,
        sigma=np.array(sigma, dtype=float),
        row_ids=tuple(row_ids),
        row_kinds=tuple(kinds),
        samples=np.array(samples, dtype=int),
        source_columns=np.array(sources, dtype=int),
        enabled=np.array(enabled, dtype=bool),
        masked_channels=frozenset(masked_channels),
        masked_zones=tuple(masked_zones),
        channel_zones={row.channel.channel_id: row.channel.zone for row in sample_rows},
    )


def check_observability(model: MeasurementModel):
    if model.m < model.n:
        raise ObservabilityError(f"{model.m} enabled rows for {model.n} window states")
    H = jacobian(model, flat_start(model, 0.0))
    rank = np.linalg.matrix_rank(H)
    if rank < model.n:
        raise ObservabilityError(f"Measurement Jacobian has rank {rank} for {model.n} window states")
    return model


def build_measurement_model(network: NetworkModel, channel_defs, h=SAMPLE_PERIOD, column_ids=None):
    channel_defs = tuple(channel_defs)
    rows = channel_rows(network, channel_defs)
    column_ids = tuple(column_ids) if column_ids is not None else tuple(d.channel_id for d in channel_defs)
    model = _build(network, SampleSystem.from_network(network), rows, h, column_ids)
    check_observability(model)
    log_message(f"Measurement model: m={model.m}, n={model.n}, nu={model.nu}", level="DEBUG")
    return model


def _check_state(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise MeasurementError(f"Window state must have length {model.n}, got {x.shape}")
    return x


def eval_h(model: MeasurementModel, x, u=None):
    """Predicted values of the enabled rows."""
    x = _check_state(model, x)
    active = model.active
    value = model.H[active] @ x + model.C[active]
    if u is not None:
        value = value + model.U[active] @ np.asarray(u, dtype=float)
    for k, f in model.quadratic_rows:
        value[k] += x @ f @ x
    return value


def jacobian(model: MeasurementModel, x):
    """Rows Y + 2 x'F over the enabled rows (F stored symmetric)."""
    x = _check_state(model, x)
    active = model.active
    H = model.H[active].copy()
    for k, f in model.quadratic_rows:
        H[k] += 2.0 * (f @ x)
    return H


@functools.lru_cache(maxsize=512)
def _masked_view(model: MeasurementModel, ids: frozenset):
    enabled = model.enabled.copy()
    for i, row_id in enumerate(model.row_ids):
        if row_id in ids:
            enabled[i] = False
    view = replace(model, enabled=enabled, masked_channels=model.masked_channels | ids)
    return check_observability(view)


def mask_channels(model: MeasurementModel, channel_ids):
    """
    View with the channels disabled at both window samples; the original model
    is untouched. Derived channels computed from a masked phase channel are
    masked with it.
    """
    ids = frozenset(channel_ids)
    if not ids:
        return model
    known = set(model.row_ids)
    unknown = sorted(ids - known)
    if unknown:
        raise MeasurementError(f"Unknown channel ids: {', '.join(unknown)}")
    virtual = sorted(i for i in ids if i.startswith("virtual:"))
    if virtual:
        raise MeasurementError(f"Virtual rows encode model physics and cannot be masked: {', '.join(virtual)}")
    dependents = model.dependents
    ids = ids.union(*(dependents.get(channel_id, ()) for channel_id in ids))
    return _masked_view(model, ids)


def _zone_system(network: NetworkModel, zone_ids):
    """Physics without the zone devices; boundary KCL rows gain a free injection state."""
    excluded = set()
    for zone_id in zone_ids:
        excluded.update(network.zone(zone_id).members)
    eq = network.stack_equations(exclude=frozenset(excluded))

    touched_by_zone, touched_by_rest = set(), set()
    for device in network.devices:
        target = touched_by_zone if device.name in excluded else touched_by_rest
        target.update(t for t in network.terminals_of(device.name) if t != GROUND)
    interior = touched_by_zone - touched_by_rest
    boundary = [node for node in network.node_phases if node in touched_by_zone and node in touched_by_rest]

    removed = {network.node_index[node] for node in interior}
    for name in excluded:
        removed.update(int(i) for i in network.internal_indices(name))
    kept = [i for i in range(network.state_count) if i not in removed]
    removed_cols = sorted(removed)

    rows = []
    for r in range(eq.row_count):
        empty = not (np.any(eq.A_x[r]) or np.any(eq.A_u[r]) or np.any(eq.A_d[r]) or eq.c[r])
        if empty:
            continue
        if np.any(eq.A_x[r, removed_cols]) or np.any(eq.A_d[r, removed_cols]):
            continue
        if r in eq.F_x and np.any(eq.F_x[r][removed_cols]):
            continue
        rows.append(r)

    injections = np.zeros((len(rows), len(boundary)))
    for k, node in enumerate(boundary):
        label = f"kcl:{node}"
        injections[rows.index(eq.row_labels.index(label)), k] = 1.0
    A_x = np.hstack([eq.A_x[np.ix_(rows, kept)], injections])
    A_d = np.hstack([eq.A_d[np.ix_(rows, kept)], np.zeros_like(injections)])
    F_x = {}
    for k, r in enumerate(rows):
        if r in eq.F_x:
            f = np.zeros((A_x.shape[1], A_x.shape[1]))
            f[:len(kept), :len(kept)] = eq.F_x[r][np.ix_(kept, kept)]
            F_x[k] = f
    labels = tuple(network.state_labels[i] for i in kept) + tuple(f"inj:{node}" for node in boundary)
    system = SampleSystem(labels, network.control_count, A_x, eq.A_u[rows], A_d, eq.c[rows], F_x,
                          tuple(eq.row_labels[r] for r in rows))
    return system, kept, removed_cols


@functools.lru_cache(maxsize=64)
def _zone_view(model: MeasurementModel, zone_ids: tuple):
    network = model.network
    system, kept, removed_cols = _zone_system(network, zone_ids)
    extra = system.state_count - len(kept)
    disabled = set(model.masked_channels)
    rows = []
    # rows of a zone view are already reduced; start again from the full network
    for row in channel_rows(network, [row.channel for row in model.sample_rows]):
        touches = np.any(row.y[removed_cols]) or (row.f is not None and np.any(row.f[removed_cols]))
        if touches:
            disabled.add(row.channel.channel_id)
        y = np.concatenate([row.y[kept], np.zeros(extra)])
        f = None
        if row.f is not None:
            f = np.zeros((len(y), len(y)))
            f[:len(kept), :len(kept)] = row.f[np.ix_(kept, kept)]
        rows.append(SampleRow(row.channel, y, f, row.c))
    view = _build(network, system, rows, model.h, model.column_ids, disabled=frozenset(disabled),
                  masked_zones=zone_ids, masked_channels=model.masked_channels)
    return check_observability(view)


def mask_zone(model: MeasurementModel, network: NetworkModel, zone_id):
    """
    Remove a protection zone: its devices' equations and internal states, its
    interior node voltages and every channel row touching them. Each boundary
    node-phase gets a free injection current per sample. Channels already
    masked on `model` stay masked; masking a second zone on a zone view removes
    both zones from the full network.
    """
    if network is not model.network:
        raise MeasurementError("Zone masking needs the network the model was built on")
    if zone_id not in {zone.zone_id for zone in network.zones}:
        raise MeasurementError(f"Unknown protection zone '{zone_id}'")
    if zone_id in model.masked_zones:
        return model
    return _zone_view(model, tuple(model.masked_zones) + (zone_id,))


def nominal_voltage(label, t, frequency_hz):
    """1 pu cosine at the phase's nominal angle for 'v:<node>.<phase>' labels, else 0."""
    if not label.startswith("v:"):
        return 0.0
    phase = label.split("@")[0].rsplit(".", 1)[-1]
    if phase not in PHASE_ANGLES:
        return 0.0
    return math.cos(2.0 * math.pi * frequency_hz * t + PHASE_ANGLES[phase])


def flat_start(model: MeasurementModel, t):
    """Nominal voltages and zero currents at t- = t - h and t."""
    N = len(model.state_labels) // 2
    f = model.network.frequency_hz
    x = np.zeros(model.n)
    for i, label in enumerate(model.state_labels):
        x[i] = nominal_voltage(label, t - model.h if i < N else t, f)
    return x


def window_controls(network: NetworkModel, t, h=SAMPLE_PERIOD):
    return np.concatenate([network.controls(t - h), network.controls(t)])
