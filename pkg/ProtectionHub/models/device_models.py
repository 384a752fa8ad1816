"""
Device models in the standard protection-zone syntax.

Every device is written as three blocks of equations over its local state
vector x (terminal voltages first, then internal states) and control vector u:

    i(t) = Y_eqx1 x + Y_equ1 u + D_eqxd1 dx/dt + C_eqc1          (through currents)
    0    = Y_eqx2 x + Y_equ2 u + D_eqxd2 dx/dt + C_eqc2          (linear internal)
    0    = Y_eqx3 x + Y_equ3 u + [x' F_eqx3^i x] + [u' F_equ3^i u] + C_eqc3

D_eqxd2 acts on the full local state; columns of states without a derivative
are zero. Values are per-unit, time coefficients are per-unit seconds.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np

BASE_FREQUENCY = 60.0
PHASES = ("A", "B", "C", "N")
PHASE_ANGLES = {"A": 0.0, "B": -2.0 * math.pi / 3.0, "C": 2.0 * math.pi / 3.0}


class ModelError(Exception):
    pass


class NodePhase(NamedTuple):
    node: str
    phase: str

    def __str__(self):
        return f"{self.node}.{self.phase}"


GROUND = NodePhase("GND", "N")


def parse_node_phase(text):
    """Parse 'B3.A' into NodePhase('B3', 'A')."""
    if isinstance(text, NodePhase):
        return text
    node, sep, phase = str(text).rpartition(".")
    if not sep or not node or phase not in PHASES:
        raise ModelError(f"Invalid node-phase '{text}', expected '<node>.<A|B|C|N>'")
    if node == GROUND.node:
        return GROUND
    return NodePhase(node, phase)


def _matrix(value, rows, cols):
    if value is None:
        return np.zeros((rows, cols))
    array = np.array(value, dtype=float).reshape(rows, cols)
    return array


def _vector(value, size):
    if value is None:
        return np.zeros(size)
    return np.array(value, dtype=float).reshape(size)


@dataclass(frozen=True, eq=False)
class DeviceModel:
    name: str
    kind: str
    terminals: Tuple[NodePhase, ...]
    state_labels: Tuple[str, ...]
    control_count: int
    row_sizes: Tuple[int, int, int]
    Y_eqx1: np.ndarray
    Y_equ1: np.ndarray
    D_eqxd1: np.ndarray
    C_eqc1: np.ndarray
    Y_eqx2: np.ndarray
    Y_equ2: np.ndarray
    D_eqxd2: np.ndarray
    C_eqc2: np.ndarray
    Y_eqx3: np.ndarray
    Y_equ3: np.ndarray
    F_eqx3: Tuple[np.ndarray, ...]
    F_equ3: Tuple[np.ndarray, ...]
    C_eqc3: np.ndarray
    control_kind: str = "none"
    control_params: Tuple[float, ...] = field(default_factory=tuple)
    parameters: dict = field(default_factory=dict)

    @property
    def state_count(self):
        return len(self.state_labels)

    @property
    def terminal_count(self):
        return len(self.terminals)

    @property
    def internal_count(self):
        return self.state_count - self.terminal_count

    @property
    def is_linear(self):
        return self.row_sizes[2] == 0 or (
            not any(np.any(f) for f in self.F_eqx3) and not any(np.any(f) for f in self.F_equ3)
        )

    def controls(self, t):
        """Control vector u(t) of this device."""
        if self.control_kind == "sinusoid":
            omega = 2.0 * math.pi * self.control_params[0]
            return np.array([math.cos(omega * t), math.sin(omega * t)])
        if self.control_kind == "constant":
            return np.array(self.control_params, dtype=float)
        return np.zeros(self.control_count)

    def validate(self):
        n, m = self.state_count, self.control_count
        n_through, n_linear, n_quadratic = self.row_sizes
        if n_through + n_linear + n_quadratic != n:
            raise ModelError(f"{self.name}: {n_through + n_linear + n_quadratic} equations for {n} states")
        if n_through != self.terminal_count:
            raise ModelError(f"{self.name}: {n_through} through-current rows for {self.terminal_count} terminals")
        expected = {
            "Y_eqx1": (n_through, n), "Y_equ1": (n_through, m), "D_eqxd1": (n_through, n),
            "Y_eqx2": (n_linear, n), "Y_equ2": (n_linear, m), "D_eqxd2": (n_linear, n),
            "Y_eqx3": (n_quadratic, n), "Y_equ3": (n_quadratic, m),
        }
        for attr, shape in expected.items():
            if getattr(self, attr).shape != shape:
                raise ModelError(f"{self.name}: {attr} has shape {getattr(self, attr).shape}, expected {shape}")
        if len(self.F_eqx3) != n_quadratic or len(self.F_equ3) != n_quadratic:
            raise ModelError(f"{self.name}: one F matrix per quadratic row is required")
        for f in self.F_eqx3:
            if f.shape != (n, n) or not np.allclose(f, f.T):
                raise ModelError(f"{self.name}: F_eqx3 must be symmetric {n}x{n}")
        for f in self.F_equ3:
            if f.shape != (m, m) or not np.allclose(f, f.T):
                raise ModelError(f"{self.name}: F_equ3 must be symmetric {m}x{m}")
        if self.control_kind == "sinusoid" and m != 2:
            raise ModelError(f"{self.name}: sinusoidal controls need two entries")
        return self


def build_device(name, kind, terminals, internal_labels, control_count=0,
                 row_sizes=None, control_kind="none", control_params=(), parameters=None, **blocks):
    """
    Generic builder: fills missing blocks with zeros, stores every F matrix in
    its symmetric form (F + F') / 2 and validates the result.
    """
    terminals = tuple(parse_node_phase(t) for t in terminals)
    labels = tuple(f"v{k}" for k in range(len(terminals))) + tuple(internal_labels)
    n, m = len(labels), control_count
    if row_sizes is None:
        row_sizes = (len(terminals), n - len(terminals), 0)
    n_through, n_linear, n_quadratic = row_sizes

    f_x = tuple(
        0.5 * (np.asarray(f, dtype=float) + np.asarray(f, dtype=float).T)
        for f in blocks.get("F_eqx3", ())
    )
    f_u = tuple(
        0.5 * (np.asarray(f, dtype=float) + np.asarray(f, dtype=float).T)
        for f in blocks.get("F_equ3", ())
    )
    if n_quadratic and not f_x:
        f_x = tuple(np.zeros((n, n)) for _ in range(n_quadratic))
    if n_quadratic and not f_u:
        f_u = tuple(np.zeros((m, m)) for _ in range(n_quadratic))

    device = DeviceModel(
        name=name,
        kind=kind,
        terminals=terminals,
        state_labels=labels,
        control_count=m,
        row_sizes=tuple(row_sizes),
        Y_eqx1=_matrix(blocks.get("Y_eqx1"), n_through, n),
        Y_equ1=_matrix(blocks.get("Y_equ1"), n_through, m),
        D_eqxd1=_matrix(blocks.get("D_eqxd1"), n_through, n),
        C_eqc1=_vector(blocks.get("C_eqc1"), n_through),
        Y_eqx2=_matrix(blocks.get("Y_eqx2"), n_linear, n),
        Y_equ2=_matrix(blocks.get("Y_equ2"), n_linear, m),
        D_eqxd2=_matrix(blocks.get("D_eqxd2"), n_linear, n),
        C_eqc2=_vector(blocks.get("C_eqc2"), n_linear),
        Y_eqx3=_matrix(blocks.get("Y_eqx3"), n_quadratic, n),
        Y_equ3=_matrix(blocks.get("Y_equ3"), n_quadratic, m),
        F_eqx3=f_x,
        F_equ3=f_u,
        C_eqc3=_vector(blocks.get("C_eqc3"), n_quadratic),
        control_kind=control_kind,
        control_params=tuple(control_params),
        parameters=dict(parameters or {}),
    )
    return device.validate()


def _default_name(prefix, *nodes):
    return f"{prefix}:" + "-".join(str(n) for n in nodes)


def make_rl_branch(R, L, from_node, to_node, name=None, kind="rl_branch"):
    """
    Series RL branch: v_from - v_to = R i + L di/dt, with the branch current as
    internal state. Through currents are +i at the from terminal, -i at the to terminal.
    """
    from_node, to_node = parse_node_phase(from_node), parse_node_phase(to_node)
    if R < 0 or L < 0:
        raise ModelError(f"Negative branch parameters R={R}, L={L}")
    if R == 0 and L == 0:
        raise ModelError("Zero-impedance branch makes the model singular")
    if not (math.isfinite(R) and math.isfinite(L)):
        raise ModelError(f"Branch parameters must be finite, got R={R}, L={L}")
    if from_node == to_node:
        raise ModelError(f"Branch terminals coincide at {from_node}")
    return build_device(
        name or _default_name(kind, from_node, to_node),
        kind,
        (from_node, to_node),
        ("i",),
        Y_eqx1=[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]],
        Y_eqx2=[[1.0, -1.0, -R]],
        D_eqxd2=[[0.0, 0.0, -L]],
        parameters={"R": R, "L": L},
    )


def make_rl_load(R, L, node, name=None):
    """RL load from a node to ground."""
    return make_rl_branch(R, L, node, GROUND, name=name or _default_name("rl_load", node), kind="rl_load")


def make_ideal_source(amplitude, phase_angle, node, name=None, frequency=BASE_FREQUENCY):
    """
    Ideal voltage source pinning the node to amplitude*cos(2*pi*f*t + phase_angle).
    The control vector is u(t) = [cos(wt), sin(wt)]; the source current is internal.
    """
    node = parse_node_phase(node)
    if not amplitude > 0:
        raise ModelError(f"Source amplitude must be positive, got {amplitude}")
    if node == GROUND:
        raise ModelError("A source cannot pin the ground reference")
    return build_device(
        name or _default_name("source", node),
        "source",
        (node,),
        ("i",),
        control_count=2,
        Y_eqx1=[[0.0, 1.0]],
        Y_eqx2=[[1.0, 0.0]],
        Y_equ2=[[-amplitude * math.cos(phase_angle), amplitude * math.sin(phase_angle)]],
        control_kind="sinusoid",
        control_params=(frequency,),
        parameters={"amplitude": amplitude, "phase_angle": phase_angle},
    )


def make_dc_source(value, node, name=None):
    """Constant voltage source, used for energization studies."""
    node = parse_node_phase(node)
    if node == GROUND:
        raise ModelError("A source cannot pin the ground reference")
    return build_device(
        name or _default_name("dc_source", node),
        "dc_source",
        (node,),
        ("i",),
        control_count=1,
        Y_eqx1=[[0.0, 1.0]],
        Y_eqx2=[[1.0, 0.0]],
        Y_equ2=[[-1.0]],
        control_kind="constant",
        control_params=(float(value),),
        parameters={"value": value},
    )


def make_fault_branch(node, R_f, name=None):
    """Resistive phase-to-ground fault branch."""
    node = parse_node_phase(node)
    if not (R_f > 0 and math.isfinite(R_f)):
        raise ModelError(f"Fault resistance must be positive and finite, got {R_f}")
    if node == GROUND:
        raise ModelError("Fault branch needs a non-ground node")
    return make_rl_branch(R_f, 0.0, node, GROUND, name=name or _default_name("fault", node), kind="fault")


def evaluate_device(device: DeviceModel, x, u=None, xdot=None):
    """
    Evaluate the three equation blocks of one device.
    Returns (through currents, linear residuals, quadratic residuals).
    """
    x = np.asarray(x, dtype=float)
    u = np.zeros(device.control_count) if u is None else np.asarray(u, dtype=float)
    xdot = np.zeros(device.state_count) if xdot is None else np.asarray(xdot, dtype=float)
    if x.shape != (device.state_count,) or xdot.shape != (device.state_count,):
        raise ModelError(f"{device.name}: state vectors must have length {device.state_count}")
    if u.shape != (device.control_count,):
        raise ModelError(f"{device.name}: control vector must have length {device.control_count}")

    through = device.Y_eqx1 @ x + device.Y_equ1 @ u + device.D_eqxd1 @ xdot + device.C_eqc1
    linear = device.Y_eqx2 @ x + device.Y_equ2 @ u + device.D_eqxd2 @ xdot + device.C_eqc2
    quadratic = device.Y_eqx3 @ x + device.Y_equ3 @ u + device.C_eqc3
    if device.row_sizes[2]:
        quadratic = quadratic + np.array([x @ f @ x for f in device.F_eqx3])
        quadratic = quadratic + np.array([u @ f @ u for f in device.F_equ3])
    return through, linear, quadratic


def companion_coefficients(R, L, h):
    """
    Trapezoidal companion form of one RL branch:
        i(t) = G * (v(t) + v(t-h)) + K * i(t-h),   G = 1/(R + 2L/h),  K = (2L/h - R) * G
    """
    if h <= 0:
        raise ModelError(f"Time step must be positive, got {h}")
    denominator = R + 2.0 * L / h
    if denominator == 0:
        raise ModelError("Zero-impedance branch has no companion form")
    conductance = 1.0 / denominator
    return conductance, (2.0 * L / h - R) * conductance
