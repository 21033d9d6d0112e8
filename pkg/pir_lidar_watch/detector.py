"""The occupancy and emergency state machine.

The detector reads conditioned samples and walks through the visit phases
(entered, seated, standing near, exited) and the emergency escalations
(warning, fall suspected, alert). Rules are checked in a fixed priority order,
sensor fault first, then exit, fall, posture, entry and finally the timers, and
at most two transitions happen on one tick.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from statistics import median_low
from typing import TYPE_CHECKING

from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator

from pir_lidar_watch._dataclasses import ConditionedSample, DetectionEvent, OccupancyState, Reason, SensorSample
from pir_lidar_watch.conditioning import ConditioningConfig, ConditioningState, condition
from pir_lidar_watch.exceptions import InvalidConfigError, OutOfOrderSampleError, TraceValidationError
from pir_lidar_watch.trace import validate_trace

if TYPE_CHECKING:
    from pir_lidar_watch._dataclasses import Trace

MAX_TRANSITIONS_PER_TICK: int = 2

# States that belong to an ongoing visit
VISIT_STATES: frozenset[OccupancyState] = frozenset(OccupancyState) - {
    OccupancyState.IDLE,
    OccupancyState.SENSOR_FAULT,
}
PRESENT_STATES: frozenset[OccupancyState] = frozenset(
    {OccupancyState.ENTERED, OccupancyState.SEATED, OccupancyState.STANDING_NEAR},
)
LATCHED_STATES: frozenset[OccupancyState] = frozenset({OccupancyState.ALERT, OccupancyState.SENSOR_FAULT})


class DetectorConfig(BaseModel):
    """Every threshold, window and timer of the state machine."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Distance bands
    entry_distance_cm: int = 150
    seated_min_cm: int = 30
    seated_max_cm: int = 80
    exit_distance_cm: int = 130
    fall_distance_cm: int = 150

    # Timers, all counted from the last motion
    fall_suspect_ms: int = 180_000
    warning_ms: int = 300_000
    alert_ms: int = 600_000

    # Margin around the seated and exit boundaries
    hysteresis_cm: int = 5

    # An entry is a drop below the empty room, an exit a rise above the closest approach
    entry_drop_cm: int = 20

    exit_confirm_ms: int = 10_000
    sensor_fault_ms: int = 5_000

    # Empty room reference
    baseline_window_samples: int = 100
    baseline_min_samples: int = 20

    def check_invariants(self: DetectorConfig) -> list[str]:
        """Get every violated invariant, empty if the config is usable."""
        violations: list[str] = []
        if not self.seated_min_cm < self.seated_max_cm:
            violations.append(f"seated_min_cm ({self.seated_min_cm}) must be < seated_max_cm ({self.seated_max_cm})")
        if not self.seated_max_cm < self.exit_distance_cm:
            violations.append(
                f"seated_max_cm ({self.seated_max_cm}) must be < exit_distance_cm ({self.exit_distance_cm})",
            )
        if not self.exit_distance_cm <= self.fall_distance_cm:
            violations.append(
                f"exit_distance_cm ({self.exit_distance_cm}) must be <= fall_distance_cm ({self.fall_distance_cm})",
            )
        if not self.warning_ms < self.alert_ms:
            violations.append(f"warning_ms ({self.warning_ms}) must be < alert_ms ({self.alert_ms})")
        if not self.fall_suspect_ms < self.alert_ms:
            violations.append(f"fall_suspect_ms ({self.fall_suspect_ms}) must be < alert_ms ({self.alert_ms})")
        for name in ("fall_suspect_ms", "warning_ms", "alert_ms", "exit_confirm_ms", "sensor_fault_ms"):
            if getattr(self, name) <= 0:
                violations.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.hysteresis_cm < 0 or self.entry_drop_cm < 0:
            violations.append("hysteresis_cm and entry_drop_cm must be >= 0")
        if self.baseline_window_samples < 1 or self.baseline_min_samples < 1:
            violations.append("baseline_window_samples and baseline_min_samples must be >= 1")
        return violations

    @model_validator(mode="after")
    def _check(self: DetectorConfig) -> DetectorConfig:
        if violations := self.check_invariants():
            raise ValueError("; ".join(violations))
        return self

    def in_seated_band(self: DetectorConfig, distance_cm: int) -> bool:
        return self.seated_min_cm <= distance_cm <= self.seated_max_cm

    def in_standing_band(self: DetectorConfig, distance_cm: int) -> bool:
        return self.seated_max_cm + self.hysteresis_cm < distance_cm <= self.exit_distance_cm


@dataclass(slots=True)
class Baseline:
    """Rolling median of the empty room distance, only fed while idle and motionless."""

    window: deque[int]
    min_samples: int
    sample_count: int = 0

    @classmethod
    def empty(cls: type[Baseline], config: DetectorConfig) -> Baseline:
        return cls(window=deque(maxlen=config.baseline_window_samples), min_samples=config.baseline_min_samples)

    def add(self: Baseline, distance_cm: int) -> None:
        self.window.append(distance_cm)
        self.sample_count += 1

    @property
    def established(self: Baseline) -> bool:
        return len(self.window) >= self.min_samples

    @property
    def empty_room_cm(self: Baseline) -> int | None:
        return median_low(self.window) if self.window else None


@dataclass(slots=True)
class DetectorState:
    config: DetectorConfig
    baseline: Baseline
    state: OccupancyState = OccupancyState.IDLE
    last_t: int | None = None

    # Closest distance seen since the visit was (re-)entered
    visit_min_cm: int | None = None
    visit_had_seated: bool = False

    # Start of the quiet period that confirms an exit
    exit_quiet_since: int | None = None

    # Start of the current run of stale LiDAR ticks
    stale_since: int | None = None


def reset(config: DetectorConfig | None = None) -> DetectorState:
    """Get a fresh detector: idle, timers zeroed and no baseline.

    Raises:
        InvalidConfigError: The config violates its invariants.
    """
    config = config or DetectorConfig()
    if violations := config.check_invariants():
        raise InvalidConfigError(violations)
    return DetectorState(config=config, baseline=Baseline.empty(config))


def _bookkeeping(cs: ConditionedSample, state: DetectorState) -> None:
    """Update the counters that depend on the state at the start of the tick."""
    config: DetectorConfig = state.config
    current: OccupancyState = state.state
    distance: int | None = cs.distance_cm

    if not cs.lidar_stale:
        state.stale_since = None
    elif state.stale_since is None:
        state.stale_since = cs.t_ms

    if distance is None:
        if current == OccupancyState.EXITED and cs.motion:
            state.exit_quiet_since = None
        return

    if current == OccupancyState.IDLE and not cs.motion:
        state.baseline.add(distance)

    if current in VISIT_STATES:
        state.visit_min_cm = distance if state.visit_min_cm is None else min(state.visit_min_cm, distance)

    if current == OccupancyState.EXITED:
        if cs.motion or distance <= config.exit_distance_cm:
            state.exit_quiet_since = None
        elif state.exit_quiet_since is None:
            state.exit_quiet_since = cs.t_ms


def _entry_allowed(distance: int, state: DetectorState) -> bool:
    config: DetectorConfig = state.config
    if distance >= config.entry_distance_cm:
        return False
    if not state.baseline.established:
        return True
    return distance < state.baseline.empty_room_cm - config.entry_drop_cm


def _next_transition(  # noqa: C901, PLR0911, PLR0912
    cs: ConditionedSample,
    state: DetectorState,
) -> tuple[OccupancyState, Reason] | None:
    """Find the first enabled rule for the current state, in priority order."""
    config: DetectorConfig = state.config
    current: OccupancyState = state.state
    distance: int | None = cs.distance_cm
    t: int = cs.t_ms

    if current == OccupancyState.ALERT:
        return None

    # Sensor fault
    if current == OccupancyState.SENSOR_FAULT:
        return None if cs.lidar_stale else (OccupancyState.IDLE, Reason.SENSOR_RECOVERED)
    if state.stale_since is not None and t - state.stale_since >= config.sensor_fault_ms:
        return OccupancyState.SENSOR_FAULT, Reason.SENSOR_STALE

    # Exit
    if (
        current in PRESENT_STATES
        and cs.motion
        and distance is not None
        and distance > config.exit_distance_cm + config.hysteresis_cm
        and state.visit_min_cm is not None
        and distance >= state.visit_min_cm + config.entry_drop_cm
    ):
        return OccupancyState.EXITED, Reason.EXIT_RULE
    if (
        current == OccupancyState.EXITED
        and state.exit_quiet_since is not None
        and t - state.exit_quiet_since >= config.exit_confirm_ms
    ):
        reason = Reason.EXIT_RULE if state.visit_had_seated else Reason.SHORT_VISIT_DISCARD
        return OccupancyState.IDLE, reason

    # Fall
    if (
        (current in PRESENT_STATES or current == OccupancyState.EXITED)
        and distance is not None
        and distance > config.fall_distance_cm
        and cs.ms_since_motion >= config.fall_suspect_ms
    ):
        return OccupancyState.FALL_SUSPECTED, Reason.FALL_RULE

    # Posture
    if cs.stable and distance is not None:
        if current in {OccupancyState.ENTERED, OccupancyState.STANDING_NEAR} and config.in_seated_band(distance):
            return OccupancyState.SEATED, Reason.SEATED_RULE
        if (
            current in {OccupancyState.ENTERED, OccupancyState.SEATED}
            and config.in_standing_band(distance)
            and cs.ms_since_motion < config.warning_ms
        ):
            return OccupancyState.STANDING_NEAR, Reason.STANDING_RULE

    # Entry
    if cs.motion and distance is not None:
        if current == OccupancyState.IDLE and _entry_allowed(distance, state):
            return OccupancyState.ENTERED, Reason.ENTRY_RULE
        if (
            current == OccupancyState.EXITED
            and distance <= config.exit_distance_cm - config.hysteresis_cm
            and _entry_allowed(distance, state)
        ):
            return OccupancyState.ENTERED, Reason.ENTRY_RULE
        if current == OccupancyState.FALL_SUSPECTED and distance < config.entry_distance_cm:
            return OccupancyState.ENTERED, Reason.ENTRY_RULE

    # Timers
    if current == OccupancyState.WARNING and cs.motion:
        return OccupancyState.SEATED, Reason.SEATED_RULE
    if (
        current == OccupancyState.SEATED
        and cs.ms_since_motion >= config.warning_ms
        and distance is not None
        and config.in_seated_band(distance)
    ):
        return OccupancyState.WARNING, Reason.WARNING_TIMER
    if current in {OccupancyState.WARNING, OccupancyState.FALL_SUSPECTED} and cs.ms_since_motion >= config.alert_ms:
        return OccupancyState.ALERT, Reason.ALERT_TIMER

    return None


def _enter(state: DetectorState, to_state: OccupancyState, distance: int | None) -> None:
    if to_state == OccupancyState.ENTERED:
        state.visit_min_cm = distance
    elif to_state == OccupancyState.SEATED:
        state.visit_had_seated = True
    elif to_state == OccupancyState.EXITED:
        state.exit_quiet_since = None
    elif to_state == OccupancyState.IDLE:
        state.visit_min_cm = None
        state.visit_had_seated = False
        state.exit_quiet_since = None
    state.state = to_state


def step(cs: ConditionedSample, state: DetectorState) -> tuple[DetectorState, list[DetectionEvent]]:
    """Advance the state machine by one conditioned sample.

    The state is updated in place and returned for convenience.

    Args:
        cs: The conditioned sample for this tick.
        state: The detector state, from reset().

    Raises:
        OutOfOrderSampleError: The sample is older than the previous one.

    Returns:
        The updated state and the transitions that happened on this tick.
    """
    if state.last_t is not None and cs.t_ms < state.last_t:
        raise OutOfOrderSampleError(cs.t_ms, state.last_t)
    state.last_t = cs.t_ms

    _bookkeeping(cs, state)

    events: list[DetectionEvent] = []
    for _ in range(MAX_TRANSITIONS_PER_TICK):
        transition = _next_transition(cs, state)
        if transition is None:
            break

        to_state, reason = transition
        event = DetectionEvent(t_ms=cs.t_ms, from_state=state.state, to_state=to_state, reason=reason)
        logger.debug("{}ms: {} -> {} ({})", cs.t_ms, event.from_state, event.to_state, reason)
        _enter(state, to_state, cs.distance_cm)
        events.append(event)

    return state, events


def acknowledge(state: DetectorState, t_ms: int) -> tuple[DetectorState, list[DetectionEvent]]:
    """Operator reset of a latched state (alert or sensor fault) back to idle.

    Does nothing if the detector isn't latched.
    """
    if state.state not in LATCHED_STATES:
        return state, []

    event = DetectionEvent(t_ms=t_ms, from_state=state.state, to_state=OccupancyState.IDLE, reason=Reason.RESET)
    logger.info("{} acknowledged at {}ms", state.state, t_ms)
    _enter(state, OccupancyState.IDLE, None)
    return state, [event]


class Detector:
    """Conditioning and state machine for one sensor stream.

    One detector per room, detectors share nothing.
    """

    def __init__(
        self: Detector,
        config: DetectorConfig | None = None,
        conditioning: ConditioningConfig | None = None,
    ) -> None:
        self.conditioning_state = ConditioningState(config=conditioning or ConditioningConfig())
        self.detector_state: DetectorState = reset(config)

    @property
    def state(self: Detector) -> OccupancyState:
        return self.detector_state.state

    def feed(self: Detector, sample: SensorSample) -> tuple[ConditionedSample, list[DetectionEvent]]:
        cs, self.conditioning_state = condition(sample, self.conditioning_state)
        self.detector_state, events = step(cs, self.detector_state)
        return cs, events

    def acknowledge(self: Detector, t_ms: int) -> list[DetectionEvent]:
        self.detector_state, events = acknowledge(self.detector_state, t_ms)
        return events


def check_trace(trace: Trace) -> None:
    """Reject traces with ordering or range violations, warn about gaps.

    Raises:
        TraceValidationError: The trace has ordering or range violations.
    """
    report = validate_trace(trace)
    if report.errors:
        raise TraceValidationError(report)
    if report.gaps:
        logger.warning("Trace has {} gap(s), first at index {}", len(report.gaps), report.gaps[0].index)


def run_trace(
    trace: Trace,
    config: DetectorConfig | None = None,
    conditioning: ConditioningConfig | None = None,
) -> list[DetectionEvent]:
    """Run a whole trace through conditioning and the state machine.

    Args:
        trace: The trace to replay.
        config: Detector thresholds, defaults if None.
        conditioning: Conditioning parameters, defaults if None.

    Raises:
        TraceValidationError: The trace has ordering or range violations.

    Returns:
        Every transition, in time order.
    """
    check_trace(trace)

    detector = Detector(config, conditioning)
    events: list[DetectionEvent] = []
    for sample in trace.samples:
        _, tick_events = detector.feed(sample)
        events.extend(tick_events)
    return events
