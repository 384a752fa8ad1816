import math
from dataclasses import dataclass
from typing import Tuple

SLG_FAULT = "SLG_FAULT"
CT_ATTACK = "CT_ATTACK"
EVENT_KINDS = (SLG_FAULT, CT_ATTACK)


class SimulationError(Exception):
    pass


class ScheduleError(SimulationError):
    pass


@dataclass(frozen=True)
class Event:
    """
    One scheduled disturbance. For SLG_FAULT the targets are node-phases and the
    parameter is the fault resistance R_f; for CT_ATTACK the targets are channel
    ids and the parameter is the ratio factor alpha.
    """
    kind: str
    start: float
    end: float
    targets: Tuple[str, ...]
    parameter: float

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScheduleError(f"Unknown event kind '{self.kind}', expected one of {', '.join(EVENT_KINDS)}")
        if not (math.isfinite(self.start) and math.isfinite(self.end)) or self.start < 0:
            raise ScheduleError(f"Event times must be finite and non-negative, got [{self.start}, {self.end}]")
        if not self.start < self.end:
            raise ScheduleError(f"Event start {self.start} must precede end {self.end}")
        if not self.targets:
            raise ScheduleError(f"{self.kind} event at {self.start}s has no targets")
        if not (self.parameter > 0 and math.isfinite(self.parameter)):
            raise ScheduleError(f"{self.kind} parameter must be positive and finite, got {self.parameter}")

    def sample_span(self, h):
        """Half-open sample range [first, last) snapped to the nearest sample instants."""
        return round(self.start / h), round(self.end / h)

    def active_at(self, k, h):
        first, last = self.sample_span(h)
        return first <= k < last

    def label(self):
        return f"{self.kind}[{self.start:g}-{self.end:g}s]"


@dataclass(frozen=True)
class EventSchedule:
    events: Tuple[Event, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: (e.start, e.kind, e.end))))

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind):
        return tuple(event for event in self.events if event.kind == kind)

    @property
    def last_end(self):
        return max((event.end for event in self.events), default=0.0)

    def active(self, t):
        return tuple(event for event in self.events if event.start <= t < event.end)
