"""A slow, obviously correct reference for the streaming detector.

The interpreter shares no state handling with conditioning.py or detector.py. Every tick
it recomputes each operand from the raw sample history by scanning backwards, derives
the visit bookkeeping from the events emitted so far, and evaluates the transition
relation as a literal table. Any difference between the two event lists is a bug in one
of them.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property
from statistics import median_low
from typing import TYPE_CHECKING

from pir_lidar_watch._dataclasses import ConditionedSample, DetectionEvent, OccupancyState, Reason, SensorSample
from pir_lidar_watch.conditioning import ConditioningConfig
from pir_lidar_watch.detector import Detector, DetectorConfig, check_trace
from pir_lidar_watch.simulator import NoiseModel, random_scenario, synthesize

if TYPE_CHECKING:
    from pir_lidar_watch._dataclasses import Trace

S = OccupancyState

# Timers short enough that random scenarios reach every state in a minute or two of trace
VERIFY_CONFIG = DetectorConfig(
    fall_suspect_ms=12_000,
    warning_ms=30_000,
    alert_ms=45_000,
    exit_confirm_ms=3_000,
    sensor_fault_ms=1_500,
)


def verification_noise(seed: int) -> NoiseModel:
    """Noise for equivalence runs, every noise source switched on."""
    return NoiseModel(
        distance_sigma_cm=2.0,
        dropout_prob=0.01,
        pir_false_high_prob=0.001,
        timing_jitter_ms=5,
        rng_seed=seed,
    )


class ReferenceInterpreter:
    """Feed samples one at a time, get the transitions of each tick back."""

    def __init__(
        self: ReferenceInterpreter,
        config: DetectorConfig | None = None,
        conditioning: ConditioningConfig | None = None,
    ) -> None:
        self.config: DetectorConfig = config or DetectorConfig()
        self.conditioning: ConditioningConfig = conditioning or ConditioningConfig()
        self.state: OccupancyState = S.IDLE

        # One entry per tick
        self.samples: list[SensorSample] = []
        self.filtered: list[int | None] = []
        self.motion: list[bool] = []
        self.stale: list[bool] = []
        self.start_states: list[OccupancyState] = []

        # (tick index, event)
        self.events: list[tuple[int, DetectionEvent]] = []

    def t(self: ReferenceInterpreter, index: int) -> int:
        return self.samples[index].t_ms

    def _filtered_distance(self: ReferenceInterpreter, i: int) -> int | None:
        if not self.samples[i].distance_valid:
            return None
        readings: list[int] = []
        for j in range(i, -1, -1):
            sample = self.samples[j]
            if sample.distance_valid and sample.distance_cm is not None:
                readings.append(sample.distance_cm)
                if len(readings) == self.conditioning.median_window_samples:
                    break
        return median_low(readings)

    def _has_motion(self: ReferenceInterpreter, i: int) -> bool:
        for j in range(i, -1, -1):
            if self.t(i) - self.t(j) >= self.conditioning.pir_debounce_ms:
                return False
            if self.samples[j].pir:
                return True
        return False

    def _ms_since_motion(self: ReferenceInterpreter, i: int) -> int:
        for j in range(i, -1, -1):
            if self.motion[j]:
                return self.t(i) - self.t(j)
        return self.t(i) - self.t(0)

    def _is_stable(self: ReferenceInterpreter, i: int) -> bool:
        if self.filtered[i] is None:
            return False

        window_ms: int = self.conditioning.stability_window_ms
        j: int = i
        while self.t(i) - self.t(j) < window_ms:
            run_broken: bool = (
                j == 0
                or self.filtered[j - 1] is None
                or self.t(j) - self.t(j - 1) > self.conditioning.lidar_stale_ms
            )
            if run_broken:
                return False
            j -= 1

        in_window: list[int] = []
        for k in range(i, -1, -1):
            if self.t(k) < self.t(i) - window_ms:
                break
            in_window.append(self.filtered[k])
        return max(in_window) - min(in_window) <= self.conditioning.stability_band_cm

    def _is_stale(self: ReferenceInterpreter, i: int) -> bool:
        reference: int = self.t(0)
        for j in range(i, -1, -1):
            if self.samples[j].distance_valid:
                reference = self.t(j)
                break
        return self.t(i) - reference > self.conditioning.lidar_stale_ms

    def _condition(self: ReferenceInterpreter, sample: SensorSample) -> ConditionedSample:
        self.samples.append(sample)
        i: int = len(self.samples) - 1
        self.filtered.append(self._filtered_distance(i))
        self.motion.append(self._has_motion(i))
        self.stale.append(self._is_stale(i))
        return ConditionedSample(
            t_ms=sample.t_ms,
            motion=self.motion[i],
            distance_cm=self.filtered[i],
            stable=self._is_stable(i),
            ms_since_motion=self._ms_since_motion(i),
            lidar_stale=self.stale[i],
        )

    def feed(self: ReferenceInterpreter, sample: SensorSample) -> list[DetectionEvent]:
        cs: ConditionedSample = self._condition(sample)
        i: int = len(self.samples) - 1
        self.start_states.append(self.state)

        emitted: list[DetectionEvent] = []
        for _ in range(2):
            facts = _Facts(self, cs, i)
            rule: Rule | None = next((r for r in RULES if self.state in r.from_states and r.guard(facts)), None)
            if rule is None:
                break
            event = DetectionEvent(t_ms=cs.t_ms, from_state=self.state, to_state=rule.to_state, reason=rule.reason)
            self.events.append((i, event))
            emitted.append(event)
            self.state = rule.to_state
        return emitted


@dataclass
class _Facts:
    """Everything a guard can read on one tick, derived from history on demand."""

    interp: ReferenceInterpreter
    cs: ConditionedSample
    i: int
    config: DetectorConfig = field(init=False)

    def __post_init__(self: _Facts) -> None:
        self.config = self.interp.config

    @property
    def d(self: _Facts) -> int | None:
        return self.cs.distance_cm

    def d_in(self: _Facts, low: int, high: int) -> bool:
        """low <= d <= high."""
        return self.d is not None and low <= self.d <= high

    def _last_event_index(self: _Facts, to_state: OccupancyState) -> int | None:
        for position in range(len(self.interp.events) - 1, -1, -1):
            if self.interp.events[position][1].to_state == to_state:
                return position
        return None

    @cached_property
    def stale_since(self: _Facts) -> int | None:
        since: int | None = None
        for j in range(self.i, -1, -1):
            if not self.interp.stale[j]:
                break
            since = self.interp.t(j)
        return since

    @cached_property
    def baseline(self: _Facts) -> list[int]:
        values: list[int] = []
        for j in range(self.i, -1, -1):
            distance = self.interp.filtered[j]
            if self.interp.start_states[j] == S.IDLE and not self.interp.motion[j] and distance is not None:
                values.append(distance)
                if len(values) == self.config.baseline_window_samples:
                    break
        return values

    def entry_allowed(self: _Facts) -> bool:
        if self.d is None or not self.d < self.config.entry_distance_cm:
            return False
        if len(self.baseline) < self.config.baseline_min_samples:
            return True
        return self.d < median_low(self.baseline) - self.config.entry_drop_cm

    @property
    def visit_min(self: _Facts) -> int | None:
        position = self._last_event_index(S.ENTERED)
        if position is None:
            return None
        entry_tick: int = self.interp.events[position][0]
        values: list[int | None] = [self.interp.filtered[entry_tick]]
        for j in range(entry_tick + 1, self.i + 1):
            if self.interp.start_states[j] not in {S.IDLE, S.SENSOR_FAULT}:
                values.append(self.interp.filtered[j])
        present = [v for v in values if v is not None]
        return min(present) if present else None

    @property
    def had_seated(self: _Facts) -> bool:
        last_idle = self._last_event_index(S.IDLE)
        start: int = 0 if last_idle is None else last_idle + 1
        return any(event.to_state == S.SEATED for _, event in self.interp.events[start:])

    @property
    def quiet_since(self: _Facts) -> int | None:
        position = self._last_event_index(S.EXITED)
        if position is None:
            return None
        exit_tick: int = self.interp.events[position][0]

        since: int | None = None
        for j in range(self.i, exit_tick, -1):
            distance = self.interp.filtered[j]
            if self.interp.motion[j] or (distance is not None and distance <= self.config.exit_distance_cm):
                break
            if distance is not None:
                since = self.interp.t(j)
        return since


@dataclass(frozen=True)
class Rule:
    from_states: frozenset[OccupancyState]
    to_state: OccupancyState
    reason: Reason
    guard: Callable[[_Facts], bool]


def _states(*states: OccupancyState) -> frozenset[OccupancyState]:
    return frozenset(states)


_PRESENT = _states(S.ENTERED, S.SEATED, S.STANDING_NEAR)

# Priority order: fault, exit, fall, posture, entry, timers
RULES: tuple[Rule, ...] = (
    Rule(
        frozenset(S) - {S.ALERT, S.SENSOR_FAULT},
        S.SENSOR_FAULT,
        Reason.SENSOR_STALE,
        lambda f: f.stale_since is not None and f.cs.t_ms - f.stale_since >= f.config.sensor_fault_ms,
    ),
    Rule(_states(S.SENSOR_FAULT), S.IDLE, Reason.SENSOR_RECOVERED, lambda f: not f.cs.lidar_stale),
    Rule(
        _PRESENT,
        S.EXITED,
        Reason.EXIT_RULE,
        lambda f: (
            f.cs.motion
            and f.d_in(f.config.exit_distance_cm + f.config.hysteresis_cm + 1, 10**9)
            and f.visit_min is not None
            and f.d >= f.visit_min + f.config.entry_drop_cm
        ),
    ),
    Rule(
        _states(S.EXITED),
        S.IDLE,
        Reason.EXIT_RULE,
        lambda f: f.quiet_since is not None and f.cs.t_ms - f.quiet_since >= f.config.exit_confirm_ms and f.had_seated,
    ),
    Rule(
        _states(S.EXITED),
        S.IDLE,
        Reason.SHORT_VISIT_DISCARD,
        lambda f: (
            f.quiet_since is not None and f.cs.t_ms - f.quiet_since >= f.config.exit_confirm_ms and not f.had_seated
        ),
    ),
    Rule(
        _PRESENT | {S.EXITED},
        S.FALL_SUSPECTED,
        Reason.FALL_RULE,
        lambda f: f.d_in(f.config.fall_distance_cm + 1, 10**9) and f.cs.ms_since_motion >= f.config.fall_suspect_ms,
    ),
    Rule(
        _states(S.ENTERED, S.STANDING_NEAR),
        S.SEATED,
        Reason.SEATED_RULE,
        lambda f: f.cs.stable and f.d_in(f.config.seated_min_cm, f.config.seated_max_cm),
    ),
    Rule(
        _states(S.ENTERED, S.SEATED),
        S.STANDING_NEAR,
        Reason.STANDING_RULE,
        lambda f: (
            f.cs.stable
            and f.d_in(f.config.seated_max_cm + f.config.hysteresis_cm + 1, f.config.exit_distance_cm)
            and f.cs.ms_since_motion < f.config.warning_ms
        ),
    ),
    Rule(_states(S.IDLE), S.ENTERED, Reason.ENTRY_RULE, lambda f: f.cs.motion and f.entry_allowed()),
    Rule(
        _states(S.EXITED),
        S.ENTERED,
        Reason.ENTRY_RULE,
        lambda f: (
            f.cs.motion
            and f.d_in(0, f.config.exit_distance_cm - f.config.hysteresis_cm)
            and f.entry_allowed()
        ),
    ),
    Rule(
        _states(S.FALL_SUSPECTED),
        S.ENTERED,
        Reason.ENTRY_RULE,
        lambda f: f.cs.motion and f.d_in(0, f.config.entry_distance_cm - 1),
    ),
    Rule(_states(S.WARNING), S.SEATED, Reason.SEATED_RULE, lambda f: f.cs.motion),
    Rule(
        _states(S.SEATED),
        S.WARNING,
        Reason.WARNING_TIMER,
        lambda f: (
            f.cs.ms_since_motion >= f.config.warning_ms and f.d_in(f.config.seated_min_cm, f.config.seated_max_cm)
        ),
    ),
    Rule(
        _states(S.WARNING, S.FALL_SUSPECTED),
        S.ALERT,
        Reason.ALERT_TIMER,
        lambda f: f.cs.ms_since_motion >= f.config.alert_ms,
    ),
)


def reference_events(
    trace: Trace,
    config: DetectorConfig | None = None,
    conditioning: ConditioningConfig | None = None,
) -> list[DetectionEvent]:
    """Run a trace through the reference interpreter.

    Raises:
        TraceValidationError: The trace has ordering or range violations.
    """
    check_trace(trace)
    interpreter = ReferenceInterpreter(config, conditioning)
    events: list[DetectionEvent] = []
    for sample in trace.samples:
        events.extend(interpreter.feed(sample))
    return events


@dataclass(frozen=True, slots=True)
class Divergence:
    """Where the detector and the reference first disagree."""

    event_index: int
    t_ms: int
    expected: DetectionEvent | None
    actual: DetectionEvent | None

    def describe(self: Divergence) -> str:
        def fmt(event: DetectionEvent | None) -> str:
            return "nothing" if event is None else f"{event.from_state} -> {event.to_state} ({event.reason})"

        return f"event #{self.event_index} at t={self.t_ms}ms: expected {fmt(self.expected)}, got {fmt(self.actual)}"


def find_divergence(
    trace: Trace,
    config: DetectorConfig | None = None,
    detector_config: DetectorConfig | None = None,
    conditioning: ConditioningConfig | None = None,
) -> Divergence | None:
    """Compare the streaming detector against the reference on one trace.

    Args:
        trace: The trace to run.
        config: Thresholds for the reference.
        detector_config: Thresholds for the streaming detector, same as config if None.
        conditioning: Conditioning parameters for both.

    Returns:
        The first disagreement, or None if both emitted the same events.
    """
    check_trace(trace)
    reference = ReferenceInterpreter(config, conditioning)
    detector = Detector(detector_config or config, conditioning)

    expected: list[DetectionEvent] = []
    actual: list[DetectionEvent] = []
    for sample in trace.samples:
        expected.extend(reference.feed(sample))
        _, events = detector.feed(sample)
        actual.extend(events)

        # Stop at the first tick where the lists part ways
        if expected != actual:
            index = next(
                (n for n, (e, a) in enumerate(zip(expected, actual, strict=False)) if e != a),
                min(len(expected), len(actual)),
            )
            wanted = expected[index] if index < len(expected) else None
            got = actual[index] if index < len(actual) else None
            return Divergence(event_index=index, t_ms=sample.t_ms, expected=wanted, actual=got)

    return None


def check_seed(
    seed: int,
    config: DetectorConfig = VERIFY_CONFIG,
    detector_config: DetectorConfig | None = None,
) -> Divergence | None:
    """Synthesize random_scenario(seed) with every noise source on and compare both implementations."""
    trace = synthesize(random_scenario(seed, config), verification_noise(seed))
    return find_divergence(trace, config, detector_config)
