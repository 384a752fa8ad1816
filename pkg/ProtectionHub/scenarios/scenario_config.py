"""
Scenario configuration (JSON).

Top-level keys: name, description, network, merging_units, events, noise_sigma,
seed, duration, thresholds, decimation, initial, strict, dump_streams,
output_dir, expectations. Unknown keys are rejected at every level.

Network devices are written once and expanded per phase ('<name>.<phase>'),
reactances are given in per-unit at the base frequency and converted to
inductance with L = X / (2 pi f).
"""
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

from ProtectionHub.estimation.measurement_model import (
    MeasurementError, MergingUnitSpec, channel_rows, expand_merging_unit,
)
from ProtectionHub.models.device_models import (
    PHASE_ANGLES, ModelError, NodePhase, make_dc_source, make_ideal_source, make_rl_branch, make_rl_load,
)
from ProtectionHub.models.network_model import Breaker, ProtectionZone, assemble
from ProtectionHub.processors.decision_logic import DecisionConfig, DecisionError
from ProtectionHub.processors.hypothesis_engine import VERDICTS, ThresholdConfig
from ProtectionHub.simulation.events import CT_ATTACK, SLG_FAULT, Event, EventSchedule, ScheduleError

TOP_LEVEL_KEYS = {
    "name", "description", "network", "merging_units", "events", "noise_sigma", "seed", "duration",
    "thresholds", "decimation", "initial", "strict", "dump_streams", "output_dir", "expectations",
}
NETWORK_KEYS = {"frequency_hz", "v_base_kv", "s_base_mva", "phases", "nodes", "devices", "breakers"}
THRESHOLD_KEYS = {"c_min", "t_d", "w_r", "k_max", "max_outer", "suspect_threshold", "tol", "max_iter"}
MU_KEYS = {"id", "zone", "device", "terminal", "voltage_node", "power"}
BREAKER_KEYS = {"id", "bus"}
EXPECTATION_KEYS = {"verdicts", "absent_verdicts", "decisions", "max_latency_s", "min_mean_confidence"}
DEVICE_KEYS = {
    "source": {"name", "type", "node", "amplitude", "angle_deg", "zone"},
    "dc_source": {"name", "type", "node", "value", "zone"},
    "rl_branch": {"name", "type", "from", "to", "r", "x", "zone"},
    "rl_load": {"name", "type", "node", "r", "x", "zone"},
}
EVENT_KEYS = {
    CT_ATTACK: {"kind", "start", "end", "targets", "alpha"},
    SLG_FAULT: {"kind", "start", "end", "targets", "r_f"},
}


class ConfigError(Exception):
    def __init__(self, message, field_path=None, line=None):
        self.message = message
        self.field_path = field_path
        self.line = line
        location = ""
        if field_path:
            location += f"{field_path}: "
        if line is not None:
            location = f"line {line}: " + location
        super().__init__(location + message)


@dataclass(frozen=True)
class Expectations:
    verdicts: Tuple[str, ...] = ()
    absent_verdicts: Tuple[str, ...] = ()
    decisions: Tuple[str, ...] = ()
    max_latency_s: Optional[float] = None
    min_mean_confidence: Optional[float] = None

    @property
    def empty(self):
        return not (self.verdicts or self.absent_verdicts or self.decisions
                    or self.max_latency_s is not None or self.min_mean_confidence is not None)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    description: str
    network: object
    merging_units: Tuple[MergingUnitSpec, ...]
    channel_defs: tuple
    schedule: EventSchedule
    noise_sigma: float
    seed: Optional[int]
    duration: float
    thresholds: ThresholdConfig
    decision: DecisionConfig
    decimation: Optional[int] = None
    initial: str = "steady"
    strict: bool = False
    dump_streams: bool = False
    output_dir: Optional[str] = None
    expectations: Expectations = Expectations()
    raw: Dict = field(default_factory=dict)


def _reject_unknown(data, allowed, path):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path)
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}", path)


def _get(data, key, path, kind=None, default=..., check=None):
    if key not in data:
        if default is ...:
            raise ConfigError("missing required field", f"{path}.{key}" if path else key)
        return default
    value = data[key]
    where = f"{path}.{key}" if path else key
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and (not isinstance(value, kind) or (kind in (int, float) and isinstance(value, bool))):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"expected {name}, got {type(value).__name__}", where)
    if check is not None and not check(value):
        raise ConfigError(f"invalid value {value!r}", where)
    return value


def _positive(value):
    return math.isfinite(value) and value > 0


def _non_negative(value):
    return math.isfinite(value) and value >= 0


def _build_devices(network_data, phases, frequency):
    nodes = _get(network_data, "nodes", "network", list)
    declared = set(nodes)
    devices, zones = [], {}

    def check_node(node, where):
        if node not in declared:
            raise ConfigError(f"references undeclared node '{node}'", where)
        return node

    for i, item in enumerate(_get(network_data, "devices", "network", list)):
        path = f"network.devices[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("expected an object", path)
        kind = _get(item, "type", path, str)
        if kind not in DEVICE_KEYS:
            raise ConfigError(f"unknown device type '{kind}', expected one of {', '.join(sorted(DEVICE_KEYS))}",
                              f"{path}.type")
        _reject_unknown(item, DEVICE_KEYS[kind], path)
        name = _get(item, "name", path, str)
        zone = _get(item, "zone", path, str)
        try:
            for phase in phases:
                device_name = f"{name}.{phase}"
                if kind == "source":
                    node = check_node(_get(item, "node", path, str), f"{path}.node")
                    amplitude = _get(item, "amplitude", path, float, check=_positive)
                    angle = math.radians(_get(item, "angle_deg", path, float, default=0.0))
                    device = make_ideal_source(amplitude, angle + PHASE_ANGLES.get(phase, 0.0),
                                               NodePhase(node, phase), name=device_name, frequency=frequency)
                elif kind == "dc_source":
                    node = check_node(_get(item, "node", path, str), f"{path}.node")
                    device = make_dc_source(_get(item, "value", path, float), NodePhase(node, phase), name=device_name)
                elif kind == "rl_branch":
                    start = check_node(_get(item, "from", path, str), f"{path}.from")
                    end = check_node(_get(item, "to", path, str), f"{path}.to")
                    r = _get(item, "r", path, float, check=_non_negative)
                    x = _get(item, "x", path, float, check=_non_negative)
                    device = make_rl_branch(r, x / (2.0 * math.pi * frequency), NodePhase(start, phase),
                                            NodePhase(end, phase), name=device_name)
                else:
                    node = check_node(_get(item, "node", path, str), f"{path}.node")
                    r = _get(item, "r", path, float, check=_non_negative)
                    x = _get(item, "x", path, float, check=_non_negative)
                    device = make_rl_load(r, x / (2.0 * math.pi * frequency), NodePhase(node, phase), name=device_name)
                devices.append(device)
                zones.setdefault(zone, []).append(device_name)
        except ModelError as e:
            raise ConfigError(str(e), path) from e
    return devices, zones


def _build_network(data, merging_units):
    network_data = _get(data, "network", "", dict)
    _reject_unknown(network_data, NETWORK_KEYS, "network")
    frequency = _get(network_data, "frequency_hz", "network", float, default=60.0, check=_positive)
    phases = tuple(_get(network_data, "phases", "network", list, default=["A", "B", "C"]))
    if not phases or any(p not in PHASE_ANGLES for p in phases):
        raise ConfigError("phases must be a non-empty subset of A, B, C", "network.phases")
    devices, zone_members = _build_devices(network_data, phases, frequency)

    breakers = None
    if "breakers" in network_data:
        breakers = []
        for i, item in enumerate(_get(network_data, "breakers", "network", list)):
            path = f"network.breakers[{i}]"
            _reject_unknown(item, BREAKER_KEYS, path)
            breakers.append(Breaker(_get(item, "id", path, str), _get(item, "bus", path, str)))

    mu_by_zone = {}
    for spec in merging_units:
        mu_by_zone.setdefault(spec.zone, []).append(spec.mu_id)
    unknown_zones = sorted(set(mu_by_zone) - set(zone_members))
    if unknown_zones:
        raise ConfigError(f"merging units reference unknown zones {', '.join(unknown_zones)}", "merging_units")
    zones = [
        ProtectionZone(zone_id, tuple(members), merging_units=tuple(mu_by_zone.get(zone_id, ())))
        for zone_id, members in zone_members.items()
    ]
    try:
        network = assemble(
            devices, zones=zones, breakers=breakers, frequency_hz=frequency,
            v_base=_get(network_data, "v_base_kv", "network", float, default=1.0, check=_positive),
            s_base=_get(network_data, "s_base_mva", "network", float, default=1.0, check=_positive),
        )
    except ModelError as e:
        raise ConfigError(str(e), "network") from e
    return network, phases


def _build_merging_units(data):
    specs = []
    seen = set()
    for i, item in enumerate(_get(data, "merging_units", "", list)):
        path = f"merging_units[{i}]"
        _reject_unknown(item, MU_KEYS, path)
        mu_id = _get(item, "id", path, str)
        if mu_id in seen:
            raise ConfigError(f"duplicate merging unit '{mu_id}'", f"{path}.id")
        seen.add(mu_id)
        specs.append(MergingUnitSpec(
            mu_id=mu_id,
            zone=_get(item, "zone", path, str),
            device=_get(item, "device", path, str),
            terminal=_get(item, "terminal", path, str),
            voltage_node=_get(item, "voltage_node", path, str),
            power=_get(item, "power", path, bool, default=False),
        ))
    return specs


def _build_events(data, channel_ids, network, duration):
    events = []
    for i, item in enumerate(_get(data, "events", "", list, default=[])):
        path = f"events[{i}]"
        if not isinstance(item, dict):
            raise ConfigError("expected an object", path)
        kind = _get(item, "kind", path, str)
        if kind not in EVENT_KEYS:
            raise ConfigError(f"unknown event kind '{kind}'", f"{path}.kind")
        _reject_unknown(item, EVENT_KEYS[kind], path)
        targets = tuple(_get(item, "targets", path, list))
        if kind == CT_ATTACK:
            parameter = _get(item, "alpha", path, float)
            missing = [t for t in targets if t not in channel_ids]
            if missing:
                raise ConfigError(f"unknown channel(s) {', '.join(map(str, missing))}", f"{path}.targets")
        else:
            parameter = _get(item, "r_f", path, float)
            node_names = {str(node) for node in network.node_phases}
            missing = [t for t in targets if t not in node_names]
            if missing:
                raise ConfigError(f"unknown node-phase(s) {', '.join(map(str, missing))}", f"{path}.targets")
        try:
            event = Event(kind, _get(item, "start", path, float), _get(item, "end", path, float), targets, parameter)
        except ScheduleError as e:
            raise ConfigError(str(e), path) from e
        if event.end > duration + 1e-12:
            raise ConfigError(f"event ends at {event.end}s after the {duration}s run", f"{path}.end")
        events.append(event)
    return EventSchedule(tuple(events))


def _build_expectations(data):
    item = _get(data, "expectations", "", dict, default={})
    _reject_unknown(item, EXPECTATION_KEYS, "expectations")
    for key in ("verdicts", "absent_verdicts"):
        for verdict in item.get(key, []):
            if verdict not in VERDICTS:
                raise ConfigError(f"unknown verdict '{verdict}'", f"expectations.{key}")
    return Expectations(
        verdicts=tuple(item.get("verdicts", ())),
        absent_verdicts=tuple(item.get("absent_verdicts", ())),
        decisions=tuple(item.get("decisions", ())),
        max_latency_s=_get(item, "max_latency_s", "expectations", float, default=None),
        min_mean_confidence=_get(item, "min_mean_confidence", "expectations", float, default=None),
    )


def parse_scenario(data, default_name="scenario"):
    _reject_unknown(data, TOP_LEVEL_KEYS, "")
    merging_units = _build_merging_units(data)
    network, phases = _build_network(data, merging_units)
    merging_units = [replace(spec, phases=phases) for spec in merging_units]

    channel_defs = []
    for spec in merging_units:
        if spec.zone not in {zone.zone_id for zone in network.zones}:
            raise ConfigError(f"unknown zone '{spec.zone}'", f"merging_units[{spec.mu_id}].zone")
        channel_defs.extend(expand_merging_unit(spec))
    try:
        channel_rows(network, channel_defs)
    except MeasurementError as e:
        raise ConfigError(str(e), "merging_units") from e
    channel_ids = {d.channel_id for d in channel_defs}

    duration = _get(data, "duration", "", float, check=_positive)
    schedule = _build_events(data, channel_ids, network, duration)

    thresholds = _get(data, "thresholds", "", dict, default={})
    _reject_unknown(thresholds, THRESHOLD_KEYS, "thresholds")
    try:
        threshold_config = ThresholdConfig(**{k: v for k, v in thresholds.items() if k not in ("t_d", "w_r")})
        decision_config = DecisionConfig(**{k: v for k, v in thresholds.items() if k in ("t_d", "w_r")})
    except (ValueError, TypeError, DecisionError) as e:
        raise ConfigError(str(e), "thresholds") from e

    initial = _get(data, "initial", "", str, default="steady")
    if initial not in ("steady", "rest"):
        raise ConfigError("expected 'steady' or 'rest'", "initial")

    return ScenarioConfig(
        name=_get(data, "name", "", str, default=default_name),
        description=_get(data, "description", "", str, default=""),
        network=network,
        merging_units=tuple(merging_units),
        channel_defs=tuple(channel_defs),
        schedule=schedule,
        noise_sigma=_get(data, "noise_sigma", "", float, default=0.0005, check=_non_negative),
        seed=_get(data, "seed", "", int, default=None),
        duration=duration,
        thresholds=threshold_config,
        decision=decision_config,
        decimation=_get(data, "decimation", "", int, default=None, check=lambda v: v >= 1),
        initial=initial,
        strict=_get(data, "strict", "", bool, default=False),
        dump_streams=_get(data, "dump_streams", "", bool, default=False),
        output_dir=_get(data, "output_dir", "", (str, type(None)), default=None),
        expectations=_build_expectations(data),
        raw=data,
    )


def load_scenario(path):
    """Read and validate a scenario file; syntax errors carry the JSON line number."""
    try:
        with open(path, "r") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file: {e}", path) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, path, line=e.lineno) from e
    default_name = os.path.splitext(os.path.basename(path))[0]
    return parse_scenario(data, default_name=default_name)


def with_overrides(data, **overrides):
    """Copy of a scenario dict with the non-None overrides applied."""
    merged = json.loads(json.dumps(data))
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged
