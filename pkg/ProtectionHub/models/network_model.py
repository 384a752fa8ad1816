"""
Network assembly: binds device terminals to global node-phases, generates the
node current-balance rows and stacks every device equation into one model.

Global state ordering (frozen):
    1. node-phase voltages, in order of first appearance over the device list
       (the ground reference GND.N carries no state),
    2. device internal states, device by device in list order.

Equation ordering: KCL rows (one per node-phase, same order as the voltages),
then every linear internal row, then every quadratic internal row.
"""
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from ProtectionHub.models.device_models import (
    BASE_FREQUENCY, GROUND, DeviceModel, ModelError, NodePhase, parse_node_phase,
)
from ProtectionHub.utils.logging_utils import log_message


class AssemblyError(ModelError):
    pass


@dataclass(frozen=True)
class ProtectionZone:
    zone_id: str
    members: Tuple[str, ...]
    boundary: Tuple[NodePhase, ...] = ()
    merging_units: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Breaker:
    breaker_id: str
    node: str


@dataclass(frozen=True, eq=False)
class AssembledEquations:
    A_x: np.ndarray
    A_u: np.ndarray
    A_d: np.ndarray
    c: np.ndarray
    F_x: Dict[int, np.ndarray]
    F_u: Dict[int, np.ndarray]
    row_labels: Tuple[str, ...]
    row_kinds: Tuple[str, ...]
    row_devices: Tuple[Optional[str], ...]

    @property
    def row_count(self):
        return self.A_x.shape[0]

    @cached_property
    def differential(self):
        return np.any(self.A_d != 0.0, axis=1)

    @property
    def is_linear(self):
        return not self.F_x and not self.F_u

    def with_rows_replaced(self, rows, A_x_rows):
        """Copy with the given rows rewritten as pure state rows (A_u, A_d, c zeroed)."""
        A_x, A_u, A_d, c = self.A_x.copy(), self.A_u.copy(), self.A_d.copy(), self.c.copy()
        for row, values in zip(rows, A_x_rows):
            A_x[row] = values
            A_u[row] = 0.0
            A_d[row] = 0.0
            c[row] = 0.0
        return replace(self, A_x=A_x, A_u=A_u, A_d=A_d, c=c)


@dataclass(frozen=True, eq=False)
class NetworkModel:
    devices: Tuple[DeviceModel, ...]
    zones: Tuple[ProtectionZone, ...]
    breakers: Tuple[Breaker, ...]
    node_phases: Tuple[NodePhase, ...]
    state_labels: Tuple[str, ...]
    device_maps: Tuple[np.ndarray, ...]
    control_slices: Tuple[slice, ...]
    control_count: int
    frequency_hz: float = BASE_FREQUENCY
    v_base: float = 1.0
    s_base: float = 1.0
    bindings: Dict[str, Tuple[NodePhase, ...]] = field(default_factory=dict)

    @property
    def state_count(self):
        return len(self.state_labels)

    @property
    def node_count(self):
        return len(self.node_phases)

    @cached_property
    def node_index(self):
        return {node: k for k, node in enumerate(self.node_phases)}

    @cached_property
    def device_index(self):
        return {device.name: k for k, device in enumerate(self.devices)}

    @cached_property
    def zone_map(self):
        return {member: zone.zone_id for zone in self.zones for member in zone.members}

    @cached_property
    def equations(self):
        return self.stack_equations()

    def device(self, name):
        try:
            return self.devices[self.device_index[name]]
        except KeyError:
            raise ModelError(f"Unknown device '{name}'") from None

    def zone(self, zone_id):
        for zone in self.zones:
            if zone.zone_id == zone_id:
                return zone
        raise ModelError(f"Unknown protection zone '{zone_id}'")

    def terminals_of(self, name):
        return self.bindings.get(name, self.device(name).terminals)

    def internal_indices(self, name):
        k = self.device_index[name]
        device = self.devices[k]
        return self.device_maps[k][device.terminal_count:]

    def voltage_index(self, node):
        node = parse_node_phase(node)
        if node == GROUND:
            return -1
        try:
            return self.node_index[node]
        except KeyError:
            raise ModelError(f"Unknown node-phase '{node}'") from None

    def controls(self, t):
        u = np.zeros(self.control_count)
        for device, block in zip(self.devices, self.control_slices):
            u[block] = device.controls(t)
        return u

    def control_series(self, times):
        """Controls for every sample time, shape (len(times), control_count)."""
        return np.array([self.controls(t) for t in times]).reshape(len(times), self.control_count)

    def stack_equations(self, exclude=frozenset()):
        """
        Stack the network equations. Devices named in `exclude` contribute neither
        through currents to KCL nor internal rows; KCL rows are kept for every node.
        """
        n, m = self.state_count, self.control_count
        kcl = len(self.node_phases)
        linear_blocks, quadratic_blocks = [], []

        A_x_kcl = np.zeros((kcl, n))
        A_u_kcl = np.zeros((kcl, m))
        A_d_kcl = np.zeros((kcl, n))
        c_kcl = np.zeros(kcl)

        for device, local_map, block in zip(self.devices, self.device_maps, self.control_slices):
            if device.name in exclude:
                continue
            cols = local_map >= 0
            gcols = local_map[cols]

            for k, terminal_index in enumerate(local_map[:device.terminal_count]):
                if terminal_index < 0:
                    continue
                A_x_kcl[terminal_index, gcols] += device.Y_eqx1[k, cols]
                A_d_kcl[terminal_index, gcols] += device.D_eqxd1[k, cols]
                A_u_kcl[terminal_index, block] += device.Y_equ1[k]
                c_kcl[terminal_index] += device.C_eqc1[k]

            def scatter(Y, D, Yu):
                rows = Y.shape[0]
                A_x, A_d, A_u = np.zeros((rows, n)), np.zeros((rows, n)), np.zeros((rows, m))
                A_x[:, gcols] = Y[:, cols]
                A_d[:, gcols] = D[:, cols]
                A_u[:, block] = Yu
                return A_x, A_d, A_u

            if device.row_sizes[1]:
                A_x, A_d, A_u = scatter(device.Y_eqx2, device.D_eqxd2, device.Y_equ2)
                labels = [f"{device.name}:linear{k}" for k in range(device.row_sizes[1])]
                linear_blocks.append((A_x, A_u, A_d, device.C_eqc2, labels, device.name))
            if device.row_sizes[2]:
                A_x, A_d, A_u = scatter(device.Y_eqx3, np.zeros_like(device.Y_eqx3), device.Y_equ3)
                F_x, F_u = [], []
                for f_local, g_local in zip(device.F_eqx3, device.F_equ3):
                    f_global = np.zeros((n, n))
                    f_global[np.ix_(gcols, gcols)] = f_local[np.ix_(cols, cols)]
                    g_global = np.zeros((m, m))
                    g_global[block, block] = g_local
                    F_x.append(f_global)
                    F_u.append(g_global)
                labels = [f"{device.name}:quadratic{k}" for k in range(device.row_sizes[2])]
                quadratic_blocks.append((A_x, A_u, A_d, device.C_eqc3, labels, device.name, F_x, F_u))

        A_x_parts, A_u_parts, A_d_parts, c_parts = [A_x_kcl], [A_u_kcl], [A_d_kcl], [c_kcl]
        row_labels = [f"kcl:{node}" for node in self.node_phases]
        row_kinds = ["kcl"] * kcl
        row_devices = [None] * kcl
        for A_x, A_u, A_d, c, labels, name in linear_blocks:
            A_x_parts.append(A_x); A_u_parts.append(A_u); A_d_parts.append(A_d); c_parts.append(c)
            row_labels += labels
            row_kinds += ["linear"] * len(labels)
            row_devices += [name] * len(labels)

        F_x_rows, F_u_rows = {}, {}
        for A_x, A_u, A_d, c, labels, name, F_x, F_u in quadratic_blocks:
            start = len(row_labels)
            A_x_parts.append(A_x); A_u_parts.append(A_u); A_d_parts.append(A_d); c_parts.append(c)
            row_labels += labels
            row_kinds += ["quadratic"] * len(labels)
            row_devices += [name] * len(labels)
            for k, (f_x, f_u) in enumerate(zip(F_x, F_u)):
                if np.any(f_x):
                    F_x_rows[start + k] = f_x
                if np.any(f_u):
                    F_u_rows[start + k] = f_u

        return AssembledEquations(
            A_x=np.vstack(A_x_parts),
            A_u=np.vstack(A_u_parts),
            A_d=np.vstack(A_d_parts),
            c=np.concatenate(c_parts),
            F_x=F_x_rows,
            F_u=F_u_rows,
            row_labels=tuple(row_labels),
            row_kinds=tuple(row_kinds),
            row_devices=tuple(row_devices),
        )


def _zone_boundaries(devices, bindings, zones):
    """Node-phases touched by devices of more than one zone."""
    owners = {}
    zone_of = {member: zone.zone_id for zone in zones for member in zone.members}
    for device in devices:
        for terminal in bindings[device.name]:
            if terminal != GROUND:
                owners.setdefault(terminal, set()).add(zone_of[device.name])
    return {node: zone_ids for node, zone_ids in owners.items() if len(zone_ids) > 1}


def _check_grounded(devices, bindings, node_phases):
    """Every node-phase needs a device path to the ground reference."""
    parent = {node: node for node in node_phases}
    parent[GROUND] = GROUND

    def find(node):
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    for device in devices:
        terminals = list(bindings[device.name])
        # single-terminal devices (sources) are referenced to ground
        if len(terminals) == 1:
            terminals.append(GROUND)
        first = find(terminals[0])
        for terminal in terminals[1:]:
            parent[find(terminal)] = first

    ground = find(GROUND)
    dangling = [str(node) for node in node_phases if find(node) != ground]
    if dangling:
        raise AssemblyError(f"Dangling node-phases without a path to ground: {', '.join(dangling)}")


def assemble(devices, bindings=None, zones=(), breakers=None, frequency_hz=BASE_FREQUENCY,
             v_base=1.0, s_base=1.0):
    """
    Assemble devices into a NetworkModel.

    `bindings` optionally rebinds device terminals ({device name: node-phases});
    devices not listed keep the terminals they were built with. Zone boundaries
    are computed here; when `breakers` is given, every boundary bus must carry a
    breaker and every breaker must sit on a boundary bus.
    """
    devices = tuple(devices)
    if not devices:
        raise AssemblyError("Cannot assemble an empty device list")

    names = [device.name for device in devices]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise AssemblyError(f"Duplicate device bindings: {', '.join(duplicates)}")

    resolved = {}
    bindings = dict(bindings or {})
    unknown = sorted(set(bindings) - set(names))
    if unknown:
        raise AssemblyError(f"Bindings reference undeclared devices: {', '.join(unknown)}")
    for device in devices:
        terminals = tuple(parse_node_phase(t) for t in bindings.get(device.name, device.terminals))
        if len(terminals) != device.terminal_count:
            raise AssemblyError(
                f"{device.name}: {len(terminals)} bindings for {device.terminal_count} terminals"
            )
        non_ground = [t for t in terminals if t != GROUND]
        if len(set(non_ground)) != len(non_ground):
            raise AssemblyError(f"{device.name}: two terminals bound to the same node-phase")
        if not non_ground:
            raise AssemblyError(f"{device.name}: every terminal bound to ground")
        resolved[device.name] = terminals

    zones = tuple(zones)
    if not zones:
        raise AssemblyError("At least one protection zone is required")
    seen = {}
    for zone in zones:
        if not zone.members:
            raise AssemblyError(f"Zone {zone.zone_id} has no members")
        for member in zone.members:
            if member not in resolved:
                raise AssemblyError(f"Zone {zone.zone_id} references unknown device '{member}'")
            if member in seen:
                raise AssemblyError(f"Device {member} belongs to zones {seen[member]} and {zone.zone_id}")
            seen[member] = zone.zone_id
    unzoned = [name for name in names if name not in seen]
    if unzoned:
        raise AssemblyError(f"Devices without a protection zone: {', '.join(unzoned)}")

    node_phases = []
    for device in devices:
        for terminal in resolved[device.name]:
            if terminal != GROUND and terminal not in node_phases:
                node_phases.append(terminal)
    _check_grounded(devices, resolved, node_phases)

    boundaries = _zone_boundaries(devices, resolved, zones)
    zones = tuple(
        replace(zone, boundary=tuple(node for node in node_phases
                                     if node in boundaries and zone.zone_id in boundaries[node]))
        for zone in zones
    )
    boundary_buses = {node.node for node in boundaries}
    if breakers is None:
        breakers = tuple(Breaker(f"BRK-{bus}", bus) for bus in sorted(boundary_buses))
    else:
        breakers = tuple(breakers)
        breaker_buses = {breaker.node for breaker in breakers}
        missing = sorted(boundary_buses - breaker_buses)
        if missing:
            raise AssemblyError(f"Zone boundaries without a breaker: {', '.join(missing)}")
        stray = sorted(breaker_buses - boundary_buses)
        if stray:
            raise AssemblyError(f"Breakers not on a zone boundary: {', '.join(stray)}")

    node_index = {node: k for k, node in enumerate(node_phases)}
    state_labels = [f"v:{node}" for node in node_phases]
    device_maps, control_slices = [], []
    control_offset = 0
    for device in devices:
        local_map = [node_index.get(t, -1) for t in resolved[device.name]]
        for label in device.state_labels[device.terminal_count:]:
            local_map.append(len(state_labels))
            state_labels.append(f"{device.name}.{label}")
        device_maps.append(np.array(local_map, dtype=int))
        control_slices.append(slice(control_offset, control_offset + device.control_count))
        control_offset += device.control_count

    network = NetworkModel(
        devices=devices,
        zones=zones,
        breakers=breakers,
        node_phases=tuple(node_phases),
        state_labels=tuple(state_labels),
        device_maps=tuple(device_maps),
        control_slices=tuple(control_slices),
        control_count=control_offset,
        frequency_hz=frequency_hz,
        v_base=v_base,
        s_base=s_base,
        bindings=resolved,
    )
    if network.equations.row_count != network.state_count:
        raise AssemblyError(
            f"Assembled {network.equations.row_count} equations for {network.state_count} states"
        )
    log_message(
        f"Assembled network: {len(devices)} devices, {len(node_phases)} node-phases, "
        f"{network.state_count} states, {len(zones)} zones, {len(breakers)} breakers",
        level="DEBUG",
    )
    return network


def evaluate_model(network: NetworkModel, x, u, xdot, equations: AssembledEquations = None):
    """Stacked residuals: KCL mismatch, linear internal rows, quadratic internal rows."""
    eq = equations or network.equations
    x, u, xdot = (np.asarray(v, dtype=float) for v in (x, u, xdot))
    if x.shape != (network.state_count,) or xdot.shape != (network.state_count,):
        raise ModelError(f"State vectors must have length {network.state_count}")
    if u.shape != (network.control_count,):
        raise ModelError(f"Control vector must have length {network.control_count}")
    residual = eq.A_x @ x + eq.A_u @ u + eq.A_d @ xdot + eq.c
    for row, f in eq.F_x.items():
        residual[row] += x @ f @ x
    for row, g in eq.F_u.items():
        residual[row] += u @ g @ u
    return residual


@dataclass(frozen=True, eq=False)
class CompanionForm:
    """
    Trapezoidal companion form M1 x(t) + M0 x(t-h) + U1 u(t) + U0 u(t-h) + c = 0.
    Algebraic rows are enforced at t only.
    """
    M1: np.ndarray
    M0: np.ndarray
    U1: np.ndarray
    U0: np.ndarray
    c: np.ndarray
    differential: np.ndarray
    h: float

    def rhs(self, x_prev, u_now, u_prev):
        return -(self.M0 @ x_prev + self.U1 @ u_now + self.U0 @ u_prev + self.c)


def discretize(network: NetworkModel, h, equations: AssembledEquations = None):
    eq = equations or network.equations
    if not eq.is_linear:
        raise ModelError("Trapezoidal companion form needs a linear network")
    if not h > 0:
        raise ModelError(f"Time step must be positive, got {h}")
    diff = eq.differential[:, None]
    M1 = np.where(diff, 0.5 * eq.A_x + eq.A_d / h, eq.A_x)
    M0 = np.where(diff, 0.5 * eq.A_x - eq.A_d / h, 0.0)
    U1 = np.where(diff, 0.5 * eq.A_u, eq.A_u)
    U0 = np.where(diff, 0.5 * eq.A_u, 0.0)
    return CompanionForm(M1=M1, M0=M0, U1=U1, U0=U0, c=eq.c.copy(), differential=eq.differential.copy(), h=h)


def _control_split(network):
    """Phasor of the sinusoidal controls and the constant controls."""
    ac = np.zeros(network.control_count, dtype=complex)
    dc = np.zeros(network.control_count)
    for device, block in zip(network.devices, network.control_slices):
        if device.control_kind == "sinusoid":
            ac[block] = [1.0, -1.0j]
        elif device.control_kind == "constant":
            dc[block] = device.control_params
    return ac, dc


def steady_state(network: NetworkModel, t=0.0, h=None, equations: AssembledEquations = None):
    """
    Sinusoidal steady state at time t. With a time step h the derivative operator
    uses the trapezoidal (warped) frequency, which gives the exact periodic
    solution of the discretized network.
    """
    eq = equations or network.equations
    if not eq.is_linear:
        raise ModelError("Steady-state initialization needs a linear network")
    omega = 2.0 * math.pi * network.frequency_hz
    omega_eff = omega if h is None else (2.0 / h) * math.tan(omega * h / 2.0)
    ac, dc = _control_split(network)

    try:
        phasor = scipy.linalg.solve(eq.A_x + 1j * omega_eff * eq.A_d, -(eq.A_u @ ac))
    except scipy.linalg.LinAlgError as e:
        raise ModelError(f"Singular network at {network.frequency_hz} Hz: {e}") from e
    constant = np.linalg.lstsq(eq.A_x, -(eq.A_u @ dc) - eq.c, rcond=None)[0]
    return np.real(phasor * np.exp(1j * omega * t)) + constant


def consistent_rest_state(network: NetworkModel, t=0.0, equations: AssembledEquations = None):
    """States with a derivative start at zero; algebraic rows are solved at t."""
    eq = equations or network.equations
    n = network.state_count
    dynamic_states = np.flatnonzero(np.any(eq.A_d != 0.0, axis=0))
    algebraic = ~eq.differential
    u = network.controls(t)
    pins = np.zeros((len(dynamic_states), n))
    pins[np.arange(len(dynamic_states)), dynamic_states] = 1.0
    A = np.vstack([eq.A_x[algebraic], pins])
    b = np.concatenate([-(eq.A_u[algebraic] @ u) - eq.c[algebraic], np.zeros(len(dynamic_states))])
    return np.linalg.lstsq(A, b, rcond=None)[0]
