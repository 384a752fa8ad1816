import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from ProtectionHub.estimation.chi_square import EstimationError
from ProtectionHub.estimation.dse_engine import (
    DEFAULT_MAX_ITER, DEFAULT_TOL, EstimationResult, normalized_residuals, wls_solve,
)
from ProtectionHub.estimation.measurement_model import (
    MeasurementError, MeasurementModel, MeasurementWindow, flat_start, mask_channels, mask_zone,
)
from ProtectionHub.models.network_model import NetworkModel
from ProtectionHub.utils.logging_utils import log_message

NORMAL = "NORMAL"
CYBER_ATTACK = "CYBER_ATTACK"
FAULT = "FAULT"
COMBINED = "COMBINED"
UNRESOLVED = "UNRESOLVED"
VERDICTS = (NORMAL, CYBER_ATTACK, FAULT, COMBINED, UNRESOLVED)

ACCEPTED = "accepted"
REJECTED = "rejected"
SKIPPED = "skipped"


@dataclass(frozen=True)
class ThresholdConfig:
    c_min: float = 0.80
    k_max: int = 4
    max_outer: int = 3
    suspect_threshold: float = 3.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    debounce_windows: int = 2

    def __post_init__(self):
        if not 0 < self.c_min < 1:
            raise ValueError(f"c_min must lie in (0, 1), got {self.c_min}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be at least 1, got {self.k_max}")
        if not 1 <= self.max_outer <= self.k_max + 1:
            raise ValueError(f"Outer iteration cap N must lie in [1, k_max + 1], got {self.max_outer}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("Solver tolerance and iteration cap must be positive")
        if self.debounce_windows < 0:
            raise ValueError("debounce_windows cannot be negative")


@dataclass(frozen=True)
class HypothesisOutcome:
    name: str
    status: str
    confidence: Optional[float] = None
    masked_channels: Tuple[str, ...] = ()
    zone: Optional[str] = None
    detail: str = ""


@dataclass(frozen=True)
class Diagnosis:
    time: float
    verdict: str
    suspects: Tuple[str, ...] = ()
    zone: Optional[str] = None
    pre_confidence: float = 1.0
    post_confidence: float = 1.0
    trail: Tuple[HypothesisOutcome, ...] = ()
    provisional: bool = False
    converged: bool = True

    @property
    def anomalous(self):
        return self.verdict != NORMAL

    def describe(self):
        parts = [self.verdict]
        if self.suspects:
            parts.append("suspects=" + "|".join(self.suspects))
        if self.zone:
            parts.append(f"zone={self.zone}")
        return " ".join(parts)


class UntestableHypothesis(Exception):
    pass


def _estimate(view: MeasurementModel, window: MeasurementWindow, config: ThresholdConfig, x0=None):
    x0 = flat_start(view, window.time) if x0 is None else x0
    result = wls_solve(view, view.assemble_z(window), x0, window.controls, tol=config.tol, max_iter=config.max_iter)
    return result.confidence, result


def test_cyberattack(model: MeasurementModel, window: MeasurementWindow, suspects, config=ThresholdConfig()):
    """Re-estimate with the suspect channels masked."""
    if not suspects:
        raise UntestableHypothesis("no suspect channels")
    try:
        return _estimate(mask_channels(model, suspects), window, config)
    except (MeasurementError, EstimationError) as e:
        raise UntestableHypothesis(str(e)) from e


def test_fault(model: MeasurementModel, network: NetworkModel, window: MeasurementWindow, zone,
               config=ThresholdConfig()):
    """Re-estimate with the protection zone removed."""
    if zone is None:
        raise UntestableHypothesis("no zone could be inferred")
    try:
        return _estimate(mask_zone(model, network, zone), window, config)
    except (MeasurementError, EstimationError) as e:
        raise UntestableHypothesis(str(e)) from e


def test_combined(model: MeasurementModel, network: NetworkModel, window: MeasurementWindow, suspects, zone,
                  config=ThresholdConfig()):
    """Re-estimate with both the zone and the suspect channels removed."""
    if zone is None or not suspects:
        raise UntestableHypothesis("combined hypothesis needs both a zone and suspects")
    try:
        return _estimate(mask_channels(mask_zone(model, network, zone), suspects), window, config)
    except (MeasurementError, EstimationError) as e:
        raise UntestableHypothesis(str(e)) from e


# hypothesis checks, not pytest tests
test_cyberattack.__test__ = False
test_fault.__test__ = False
test_combined.__test__ = False


def select_suspects(result: EstimationResult, config: ThresholdConfig):
    """Channels above the suspect threshold, largest first; the single largest when none qualifies."""
    ranking = normalized_residuals(result)
    above = [channel_id for channel_id, value in ranking if value > config.suspect_threshold]
    if above:
        return above
    return [ranking[0][0]] if ranking else []


def infer_zone(model: MeasurementModel, suspects):
    """Zone owning the plurality of suspects; ties go to the lowest zone id."""
    counts = Counter(zone for zone in (model.zone_of(s) for s in suspects) if zone is not None)
    if not counts:
        return None
    best = max(counts.values())
    return min(zone for zone, count in counts.items() if count == best)


def _base_estimate(model, window, prev_estimate, config):
    """Warm start first, flat start on retries, at most max_outer attempts."""
    warm = None
    if prev_estimate is not None and prev_estimate.converged and prev_estimate.x.shape == (model.n,):
        warm = prev_estimate.x
    result = None
    for attempt in range(config.max_outer):
        x0 = warm if attempt == 0 and warm is not None else flat_start(model, window.time)
        result = wls_solve(model, model.assemble_z(window), x0, window.controls, tol=config.tol,
                           max_iter=config.max_iter)
        if result.converged:
            return result, attempt + 1
        log_message(f"t={window.time:.6f}s DSE attempt {attempt + 1} failed: {result.diagnostic}", level="DEBUG")
    return result, config.max_outer


def classify_window(model: MeasurementModel, network: NetworkModel, window: MeasurementWindow,
                    prev_estimate=None, config: ThresholdConfig = ThresholdConfig()):
    base, attempts = _base_estimate(model, window, prev_estimate, config)
    if not base.converged:
        log_message(f"t={window.time:.6f}s DSE did not converge after {attempts} attempts", level="WARNING")
        return base, Diagnosis(window.time, UNRESOLVED, pre_confidence=0.0, post_confidence=0.0, converged=False)

    c0 = base.confidence
    if c0 >= config.c_min:
        return base, Diagnosis(window.time, NORMAL, pre_confidence=c0, post_confidence=c0)

    trail = []
    suspects = select_suspects(base, config)
    # base restarts use up H1 slots: at most k_max + 3 estimations per window
    candidates = suspects[:config.k_max + 1 - attempts]

    # H1: grow the masked set one suspect at a time
    h1_estimate = None
    for k in range(1, len(candidates) + 1):
        masked = tuple(candidates[:k])
        try:
            c1, h1_estimate = test_cyberattack(model, window, masked, config)
        except UntestableHypothesis as e:
            trail.append(HypothesisOutcome("H1", SKIPPED, masked_channels=masked, detail=str(e)))
            break
        if c1 >= config.c_min:
            trail.append(HypothesisOutcome("H1", ACCEPTED, c1, masked_channels=masked))
            return base, Diagnosis(window.time, CYBER_ATTACK, masked, None, c0, c1, tuple(trail))
        trail.append(HypothesisOutcome("H1", REJECTED, c1, masked_channels=masked))

    # H2: remove the zone owning most base suspects
    zone = infer_zone(model, suspects[:config.k_max])
    detail = ""
    if h1_estimate is not None:
        detail = f"H1-masked candidate zone {infer_zone(model, select_suspects(h1_estimate, config)[:config.k_max])}"
    try:
        c2, h2_estimate = test_fault(model, network, window, zone, config)
    except UntestableHypothesis as e:
        trail.append(HypothesisOutcome("H2", SKIPPED, zone=zone, detail=f"{e}; {detail}".strip("; ")))
        log_message(f"t={window.time:.6f}s fault hypothesis untestable for zone {zone}: {e}", level="WARNING")
        trail.append(HypothesisOutcome("H3", SKIPPED, zone=zone, detail="fault hypothesis untestable"))
        return base, Diagnosis(window.time, UNRESOLVED, tuple(candidates), zone, c0, c0, tuple(trail))
    if c2 >= config.c_min:
        trail.append(HypothesisOutcome("H2", ACCEPTED, c2, zone=zone, detail=detail))
        return base, Diagnosis(window.time, FAULT, tuple(suspects), zone, c0, c2, tuple(trail))
    trail.append(HypothesisOutcome("H2", REJECTED, c2, zone=zone, detail=detail))

    # H3: zone removed plus the worst channel left after zone removal
    remaining = select_suspects(h2_estimate, config)
    combined = tuple(remaining[:1])
    try:
        c3, _ = test_combined(model, network, window, combined, zone, config)
    except UntestableHypothesis as e:
        trail.append(HypothesisOutcome("H3", SKIPPED, masked_channels=combined, zone=zone, detail=str(e)))
        log_message(f"t={window.time:.6f}s combined hypothesis untestable: {e}", level="WARNING")
        return base, Diagnosis(window.time, UNRESOLVED, combined, zone, c0, max(c2, c0), tuple(trail))
    if c3 >= config.c_min:
        trail.append(HypothesisOutcome("H3", ACCEPTED, c3, masked_channels=combined, zone=zone))
        return base, Diagnosis(window.time, COMBINED, combined, zone, c0, c3, tuple(trail))
    trail.append(HypothesisOutcome("H3", REJECTED, c3, masked_channels=combined, zone=zone))

    best = max([c0] + [o.confidence for o in trail if o.confidence is not None])
    log_message(f"t={window.time:.6f}s anomaly unresolved (c={c0:.3f}, best masked c={best:.3f})", level="DEBUG")
    return base, Diagnosis(window.time, UNRESOLVED, tuple(candidates), zone, c0, best, tuple(trail))


class HypothesisEngine:
    """
    Sequential classifier for one run: carries the warm start between windows
    and marks the windows right after a threshold crossing as provisional.
    """

    def __init__(self, model: MeasurementModel, network: NetworkModel, config: ThresholdConfig = ThresholdConfig()):
        self.model = model
        self.network = network
        self.config = config
        self.previous = None
        self.below = False
        self.since_crossing = math.inf
        self.windows = 0

    def classify(self, window: MeasurementWindow):
        result, diagnosis = classify_window(self.model, self.network, window, self.previous, self.config)
        if result.converged:
            self.previous = result
        below = result.confidence < self.config.c_min
        if self.windows and below != self.below:
            self.since_crossing = 0
        else:
            self.since_crossing += 1
        self.below = below
        self.windows += 1
        if self.since_crossing < self.config.debounce_windows:
            diagnosis = replace(diagnosis, provisional=True)
        log_message(
            f"t={window.time:.6f}s c={result.confidence:.4f} zeta={result.zeta:.3f} nu={result.nu} "
            f"{diagnosis.describe()}{' (provisional)' if diagnosis.provisional else ''}",
            level="DEBUG",
        )
        return result, diagnosis


def verdict_counts(diagnoses):
    counts = Counter(d.verdict for d in diagnoses)
    return {verdict: counts.get(verdict, 0) for verdict in VERDICTS}
