from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

# LiDAR working range (TF-Luna: 0.2-8 m)
MIN_DISTANCE_CM: int = 20
MAX_DISTANCE_CM: int = 800

# The sensor board polls both sensors every 50 ms
DEFAULT_PERIOD_MS: int = 50


def distance_in_range(distance_cm: int | None) -> bool:
    """Check if a reading is inside the LiDAR working range."""
    return distance_cm is not None and MIN_DISTANCE_CM <= distance_cm <= MAX_DISTANCE_CM


@dataclass(frozen=True, slots=True)
class SensorSample:
    """One fused observation: PIR level and LiDAR distance sampled on the same tick.

    Readings outside the working range are kept as read, with distance_valid=False.
    A missed or corrupt LiDAR frame is distance_cm=None, distance_valid=False.
    """

    t_ms: int
    pir: bool
    distance_cm: int | None
    distance_valid: bool

    @classmethod
    def from_reading(cls: type[SensorSample], t_ms: int, pir: bool, distance_cm: int | None) -> SensorSample:
        """Build a sample and derive validity from the working range."""
        return cls(t_ms=t_ms, pir=pir, distance_cm=distance_cm, distance_valid=distance_in_range(distance_cm))


@dataclass(frozen=True, slots=True)
class Trace:
    samples: tuple[SensorSample, ...] = ()
    nominal_period_ms: int = DEFAULT_PERIOD_MS

    # Where the trace came from, e.g. rng seed and how many noisy readings were truncated
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __len__(self: Trace) -> int:
        return len(self.samples)


class ViolationKind(StrEnum):
    ORDERING = "ORDERING"
    GAP = "GAP"
    RANGE = "RANGE"


@dataclass(frozen=True, slots=True)
class Violation:
    kind: ViolationKind
    index: int
    detail: str


@dataclass(frozen=True, slots=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def errors(self: ValidationReport) -> tuple[Violation, ...]:
        """Violations that make a trace unusable (ordering and range)."""
        return tuple(v for v in self.violations if v.kind != ViolationKind.GAP)

    @property
    def gaps(self: ValidationReport) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.kind == ViolationKind.GAP)

    def __bool__(self: ValidationReport) -> bool:
        return bool(self.violations)

    def __len__(self: ValidationReport) -> int:
        return len(self.violations)


@dataclass(frozen=True, slots=True)
class ConditionedSample:
    """A sample after debounce and filtering, carrying the operands the rules read."""

    t_ms: int
    motion: bool
    distance_cm: int | None
    stable: bool
    ms_since_motion: int
    lidar_stale: bool


class OccupancyState(StrEnum):
    IDLE = "IDLE"
    ENTERED = "ENTERED"
    SEATED = "SEATED"
    STANDING_NEAR = "STANDING_NEAR"
    EXITED = "EXITED"
    FALL_SUSPECTED = "FALL_SUSPECTED"
    WARNING = "WARNING"
    ALERT = "ALERT"
    SENSOR_FAULT = "SENSOR_FAULT"


class Reason(StrEnum):
    ENTRY_RULE = "ENTRY_RULE"
    SEATED_RULE = "SEATED_RULE"
    STANDING_RULE = "STANDING_RULE"
    EXIT_RULE = "EXIT_RULE"
    FALL_RULE = "FALL_RULE"
    WARNING_TIMER = "WARNING_TIMER"
    ALERT_TIMER = "ALERT_TIMER"
    SHORT_VISIT_DISCARD = "SHORT_VISIT_DISCARD"
    SENSOR_STALE = "SENSOR_STALE"
    SENSOR_RECOVERED = "SENSOR_RECOVERED"
    RESET = "RESET"


@dataclass(frozen=True, slots=True)
class DetectionEvent:
    t_ms: int
    from_state: OccupancyState
    to_state: OccupancyState
    reason: Reason

    def to_dict(self: DetectionEvent) -> dict[str, Any]:
        """The event in its JSON lines form."""
        return {
            "t_ms": self.t_ms,
            "from": self.from_state.value,
            "to": self.to_state.value,
            "reason": self.reason.value,
        }

    @classmethod
    def from_dict(cls: type[DetectionEvent], data: dict[str, Any]) -> DetectionEvent:
        return cls(
            t_ms=int(data["t_ms"]),
            from_state=OccupancyState(data["from"]),
            to_state=OccupancyState(data["to"]),
            reason=Reason(data["reason"]),
        )


@dataclass(frozen=True, slots=True)
class AlertEnvelope:
    """A detection event stamped with where it came from and its place in the source's sequence."""

    event: DetectionEvent
    source_id: str
    emitted_at: int
    sequence: int

    @property
    def is_alert(self: AlertEnvelope) -> bool:
        return self.event.to_state == OccupancyState.ALERT

    def to_dict(self: AlertEnvelope) -> dict[str, Any]:
        """The envelope in its wire form. Key order is part of the format."""
        return {
            "source_id": self.source_id,
            "seq": self.sequence,
            "t_ms": self.event.t_ms,
            "from": self.event.from_state.value,
            "to": self.event.to_state.value,
            "reason": self.event.reason.value,
        }

    @classmethod
    def from_dict(cls: type[AlertEnvelope], data: dict[str, Any]) -> AlertEnvelope:
        event = DetectionEvent.from_dict(data)
        return cls(event=event, source_id=str(data["source_id"]), emitted_at=event.t_ms, sequence=int(data["seq"]))
