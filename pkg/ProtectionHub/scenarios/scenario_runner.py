"""
End-to-end scenario runs: simulate, estimate every sliding two-sample window,
classify, decide, then write trace.csv, decisions.csv and report.json (plus
streams.csv when stream dumps are enabled) into the run's output directory.
"""
import json
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from ProtectionHub.config.config import (
    get_decimation, get_default_seed, get_max_workers, get_output_dir, is_strict_mode, is_stream_dump_enabled,
)
from ProtectionHub.estimation.measurement_model import (
    SAMPLE_PERIOD, MeasurementError, MeasurementWindow, build_measurement_model, window_controls,
)
from ProtectionHub.processors.decision_logic import (
    ALERT, DETECTED, TRIP, UNRESOLVED_ALARM, attach_latencies, decide, latency_report, new_state, update_area,
)
from ProtectionHub.processors.hypothesis_engine import UNRESOLVED, HypothesisEngine, verdict_counts
from ProtectionHub.scenarios.builtin_cases import case_config
from ProtectionHub.scenarios.scenario_config import ConfigError, ScenarioConfig, load_scenario, parse_scenario
from ProtectionHub.simulation.waveform_sim import simulate, stack_streams, write_stream_csv
from ProtectionHub.utils.logging_utils import log_message

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_UNRESOLVED = 3

TRACE_COLUMNS = [
    "time_s", "zeta", "nu", "confidence", "iterations", "converged", "verdict", "provisional",
    "post_confidence", "suspects", "zone", "alert", "trip", "alarm", "events",
]
DECISION_COLUMNS = ["time_s", "kind", "verdict", "window_time_s", "latency_s", "event", "suspects", "zone"]
FLOAT_FORMAT = "%.9g"
PROGRESS_EVERY = 4800


@dataclass(frozen=True, eq=False)
class RunReport:
    name: str
    output_dir: str
    seed: int
    decimation: int
    trace: pd.DataFrame
    diagnoses: Tuple
    decisions: Tuple
    latency: Tuple
    timeline: Tuple[Dict, ...]
    expectations: Dict
    summary: Dict
    strict: bool = False
    files: Dict[str, str] = field(default_factory=dict)

    @property
    def unresolved(self):
        return any(d.verdict == UNRESOLVED and not d.provisional for d in self.diagnoses) or any(
            d.kind == UNRESOLVED_ALARM for d in self.decisions
        )

    @property
    def exit_code(self):
        return EXIT_UNRESOLVED if self.strict and self.unresolved else EXIT_OK

    @property
    def expectations_met(self):
        return all(check["passed"] for check in self.expectations.values())


def _resolve(config: ScenarioConfig, output_dir, seed, strict, decimation):
    seed = seed if seed is not None else config.seed if config.seed is not None else get_default_seed()
    decimation = decimation if decimation is not None else config.decimation or get_decimation()
    if decimation < 1:
        raise ConfigError(f"decimation must be at least 1, got {decimation}", "decimation")
    strict = bool(strict) or config.strict or is_strict_mode()
    output_dir = output_dir or config.output_dir or os.path.join(get_output_dir(), config.name)
    return output_dir, seed, strict, decimation


def _segments(diagnoses):
    """Runs of identical final verdicts; provisional windows extend the running segment."""
    segments = []
    for diagnosis in diagnoses:
        if segments and (diagnosis.provisional or segments[-1]["verdict"] == diagnosis.verdict):
            segment = segments[-1]
            segment["end_s"] = diagnosis.time
            segment["windows"] += 1
            if not diagnosis.provisional and diagnosis.suspects:
                segment["_suspects"][diagnosis.suspects] += 1
            if not diagnosis.provisional and diagnosis.zone:
                segment["_zones"][diagnosis.zone] += 1
            continue
        segments.append({
            "verdict": diagnosis.verdict,
            "start_s": diagnosis.time,
            "end_s": diagnosis.time,
            "windows": 1,
            "_suspects": Counter([diagnosis.suspects] if diagnosis.suspects else []),
            "_zones": Counter([diagnosis.zone] if diagnosis.zone else []),
        })
    timeline = []
    for segment in segments:
        suspects = segment.pop("_suspects")
        zones = segment.pop("_zones")
        segment["suspects"] = list(suspects.most_common(1)[0][0]) if suspects else []
        segment["zone"] = zones.most_common(1)[0][0] if zones else None
        timeline.append(segment)
    return tuple(timeline)


def _check_expectations(config: ScenarioConfig, diagnoses, decisions, latency, confidences):
    expected = config.expectations
    seen = {d.verdict for d in diagnoses if not d.provisional}
    kinds = {d.kind for d in decisions}
    checks = {}
    for verdict in expected.verdicts:
        checks[f"verdict:{verdict}"] = {"passed": verdict in seen, "detail": "present" if verdict in seen else "absent"}
    for verdict in expected.absent_verdicts:
        checks[f"no_verdict:{verdict}"] = {
            "passed": verdict not in seen, "detail": "absent" if verdict not in seen else "present",
        }
    for kind in expected.decisions:
        checks[f"decision:{kind}"] = {"passed": kind in kinds, "detail": "emitted" if kind in kinds else "missing"}
    if expected.max_latency_s is not None:
        worst = max((row.latency for row in latency if row.latency is not None), default=None)
        passed = all(row.status == DETECTED for row in latency) and (
            worst is None or worst <= expected.max_latency_s
        )
        checks["max_latency_s"] = {"passed": passed, "detail": f"worst latency {worst}"}
    if expected.min_mean_confidence is not None:
        mean_c = float(np.mean(confidences)) if len(confidences) else 0.0
        checks["min_mean_confidence"] = {
            "passed": mean_c >= expected.min_mean_confidence, "detail": f"mean confidence {mean_c:.6f}",
        }
    return checks


def _trace_frame(times, results, diagnoses, decisions, schedule):
    flags = {ALERT: set(), TRIP: set(), UNRESOLVED_ALARM: set()}
    for decision in decisions:
        flags.setdefault(decision.kind, set()).add(decision.time)
    return pd.DataFrame({
        "time_s": times,
        "zeta": [r.zeta for r in results],
        "nu": [r.nu for r in results],
        "confidence": [r.confidence for r in results],
        "iterations": [r.iterations for r in results],
        "converged": [int(r.converged) for r in results],
        "verdict": [d.verdict for d in diagnoses],
        "provisional": [int(d.provisional) for d in diagnoses],
        "post_confidence": [d.post_confidence for d in diagnoses],
        "suspects": ["|".join(d.suspects) for d in diagnoses],
        "zone": [d.zone or "" for d in diagnoses],
        "alert": [int(t in flags[ALERT]) for t in times],
        "trip": [int(t in flags[TRIP]) for t in times],
        "alarm": [int(t in flags[UNRESOLVED_ALARM]) for t in times],
        "events": ["|".join(e.label() for e in schedule.active(t)) for t in times],
    }, columns=TRACE_COLUMNS)


def _decision_dict(d):
    return {
        "time_s": d.time,
        "kind": d.kind,
        "verdict": d.verdict,
        "window_time_s": d.window_time,
        "latency_s": d.latency,
        "event": d.event or "",
        "suspects": "|".join(d.suspects),
        "zone": d.zone or "",
    }


def _decision_frame(decisions):
    return pd.DataFrame([_decision_dict(d) for d in decisions], columns=DECISION_COLUMNS)


def _latency_dict(row):
    return {
        "event": row.event,
        "kind": row.kind,
        "start_s": row.start,
        "end_s": row.end,
        "expected": row.expected,
        "status": row.status,
        "decision_time_s": row.decision_time,
        "latency_s": row.latency,
        "mean_confidence": row.mean_confidence,
        "min_confidence": row.min_confidence,
    }


def _write_report(report: RunReport, config: ScenarioConfig, path):
    payload = {
        "name": report.name,
        "description": config.description,
        "seed": report.seed,
        "decimation": report.decimation,
        "strict": report.strict,
        "summary": report.summary,
        "timeline": list(report.timeline),
        "decisions": [_decision_dict(d) for d in report.decisions],
        "latency": [_latency_dict(row) for row in report.latency],
        "expectations": report.expectations,
        "exit_code": report.exit_code,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def run_scenario(config_or_path, output_dir=None, seed=None, strict=None, decimation=None):
    """
    Run one scenario (a ScenarioConfig, a scenario dict or a JSON path) and write
    its artifacts. Windows advance `decimation` samples at a time; with the
    default of one there is one window per simulated sample after the first.
    """
    if isinstance(config_or_path, ScenarioConfig):
        config = config_or_path
    elif isinstance(config_or_path, dict):
        config = parse_scenario(config_or_path)
    else:
        config = load_scenario(config_or_path)
    output_dir, seed, strict, decimation = _resolve(config, output_dir, seed, strict, decimation)
    started = time.perf_counter()
    log_message(f"Running scenario '{config.name}' (seed {seed}, decimation {decimation}) into {output_dir}",
                level="INFO")

    network = config.network
    h = SAMPLE_PERIOD
    try:
        model = build_measurement_model(network, config.channel_defs, h=h)
    except MeasurementError as e:
        raise ConfigError(str(e), "merging_units") from e

    streams = simulate(network, config.schedule, config.duration, noise_sigma=config.noise_sigma, seed=seed,
                       channel_defs=config.channel_defs, initial=config.initial, h=h)
    sample_times, values = stack_streams(streams, model.column_ids)

    engine = HypothesisEngine(model, network, config.thresholds)
    state = new_state(config.decision)
    dt = decimation * h
    times, results, diagnoses, decisions = [], [], [], []
    for count, k in enumerate(range(1, len(sample_times), decimation), start=1):
        t = float(sample_times[k])
        window = MeasurementWindow(t, values[k - 1:k + 1], window_controls(network, t, h))
        result, diagnosis = engine.classify(window)
        update_area(state, result.confidence, dt, time=t)
        decisions.extend(decide(state, diagnosis, config.decision))
        times.append(t)
        results.append(result)
        diagnoses.append(diagnosis)
        if count % PROGRESS_EVERY == 0:
            log_message(f"{config.name}: processed {count} windows up to t={t:.3f}s", level="INFO")

    decisions = attach_latencies(decisions, config.schedule)
    confidences = np.array([r.confidence for r in results])
    latency = latency_report(decisions, config.schedule, times, confidences, config.decision)
    final = [d for d in diagnoses if not d.provisional]
    summary = {
        "windows": len(results),
        "samples": int(len(sample_times)),
        "channels": len(model.column_ids),
        "window_states": model.n,
        "window_rows": model.m,
        "nu": model.nu,
        "mean_confidence": float(confidences.mean()) if len(confidences) else None,
        "min_confidence": float(confidences.min()) if len(confidences) else None,
        "non_converged_windows": int(sum(not r.converged for r in results)),
        "verdict_counts": verdict_counts(final),
        "decision_counts": dict(Counter(d.kind for d in decisions)),
    }

    report = RunReport(
        name=config.name,
        output_dir=output_dir,
        seed=seed,
        decimation=decimation,
        trace=_trace_frame(times, results, diagnoses, decisions, config.schedule),
        diagnoses=tuple(diagnoses),
        decisions=tuple(decisions),
        latency=tuple(latency),
        timeline=_segments(diagnoses),
        expectations=_check_expectations(config, diagnoses, decisions, latency, confidences),
        summary=summary,
        strict=strict,
    )

    os.makedirs(output_dir, exist_ok=True)
    files = {
        "trace": os.path.join(output_dir, "trace.csv"),
        "decisions": os.path.join(output_dir, "decisions.csv"),
        "report": os.path.join(output_dir, "report.json"),
    }
    report.trace.to_csv(files["trace"], index=False, float_format=FLOAT_FORMAT)
    _decision_frame(report.decisions).to_csv(files["decisions"], index=False, float_format=FLOAT_FORMAT)
    _write_report(report, config, files["report"])
    if config.dump_streams or is_stream_dump_enabled():
        files["streams"] = write_stream_csv(streams, os.path.join(output_dir, "streams.csv"))
    report.files.update(files)

    failed = [name for name, check in report.expectations.items() if not check["passed"]]
    if failed:
        log_message(f"{config.name}: expectations not met: {', '.join(failed)}", level="WARNING")
    if strict and report.unresolved:
        log_message(f"{config.name}: unresolved anomalies present in strict mode", level="WARNING")
    log_message(
        f"Scenario '{config.name}' completed in {time.perf_counter() - started:.1f}s: "
        f"{len(results)} windows, {len(decisions)} decisions",
        level="INFO",
    )
    return report


def resolve_source(source):
    """A built-in case name or a scenario file path, as a parsed ScenarioConfig."""
    if not os.path.exists(source) and not source.endswith(".json"):
        return parse_scenario(case_config(source), default_name=source)
    return load_scenario(source)


def _run_one(source, output_dir, seed, strict, decimation):
    try:
        report = run_scenario(resolve_source(source), output_dir=output_dir, seed=seed, strict=strict,
                              decimation=decimation)
        return source, report.exit_code, report.summary
    except ConfigError as e:
        return source, EXIT_CONFIG_ERROR, {"error": str(e)}


def run_batch(sources, output_root=None, seed=None, strict=None, decimation=None, max_workers=None):
    """
    Run independent scenarios in a process pool, one output directory each.
    Returns {source: (exit_code, summary)}.
    """
    output_root = output_root or get_output_dir()
    configs = {source: resolve_source(source) for source in sources}
    directories = {}
    for source, config in configs.items():
        directory = os.path.abspath(config.output_dir or os.path.join(output_root, config.name))
        if directory in directories:
            raise ConfigError(f"scenarios '{directories[directory]}' and '{source}' share output directory "
                              f"{directory}", "output_dir")
        directories[directory] = source

    outcomes = {}
    workers = min(max_workers or get_max_workers(), max(len(sources), 1))
    log_message(f"Running {len(sources)} scenarios with {workers} workers", level="INFO")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_run_one, source, directory, seed, strict, decimation): source
            for directory, source in directories.items()
        }
        for future in as_completed(futures):
            source, exit_code, summary = future.result()
            outcomes[source] = (exit_code, summary)
            log_message(f"{source}: exit code {exit_code}", level="INFO" if exit_code == EXIT_OK else "WARNING")
    return outcomes


def batch_exit_code(outcomes):
    codes = [code for code, _ in outcomes.values()]
    if not codes or all(code == EXIT_OK for code in codes):
        return EXIT_OK
    for code in (EXIT_CONFIG_ERROR, EXIT_UNRESOLVED, EXIT_FAILURE):
        if code in codes:
            return code
    return EXIT_FAILURE
