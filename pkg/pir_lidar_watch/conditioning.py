from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from statistics import median_low
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, model_validator

from pir_lidar_watch._dataclasses import ConditionedSample, SensorSample
from pir_lidar_watch.exceptions import OutOfOrderSampleError

if TYPE_CHECKING:
    from pir_lidar_watch._dataclasses import Trace


class ConditioningConfig(BaseModel):
    """How raw samples are turned into the operands the detector rules read."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Motion stays on this long after the last PIR HIGH
    pir_debounce_ms: int = 200

    # Median over this many valid readings, must be odd
    median_window_samples: int = 5

    # "Stable" means the distance stayed inside the band for the whole window
    stability_window_ms: int = 3000
    stability_band_cm: int = 10

    # No valid LiDAR reading for longer than this and the sensor is considered stale
    lidar_stale_ms: int = 500

    def check_invariants(self: ConditioningConfig) -> list[str]:
        """Get every violated invariant, empty if the config is usable."""
        violations: list[str] = []
        if self.median_window_samples < 1 or self.median_window_samples % 2 == 0:
            violations.append(f"median_window_samples must be odd and >= 1, got {self.median_window_samples}")
        for name in ("pir_debounce_ms", "stability_window_ms", "lidar_stale_ms"):
            if getattr(self, name) <= 0:
                violations.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.stability_band_cm < 0:
            violations.append(f"stability_band_cm must be >= 0, got {self.stability_band_cm}")
        return violations

    @model_validator(mode="after")
    def _check(self: ConditioningConfig) -> ConditioningConfig:
        if violations := self.check_invariants():
            raise ValueError("; ".join(violations))
        return self


@dataclass(slots=True)
class ConditioningState:
    """Streaming accumulator for one sensor stream. One owner, not thread safe."""

    config: ConditioningConfig = field(default_factory=ConditioningConfig)
    first_t: int | None = None
    last_t: int | None = None
    last_high_t: int | None = None
    last_valid_t: int | None = None
    ms_since_motion: int = 0
    present_since: int | None = None
    readings: deque[int] = field(default_factory=deque)

    # Monotonic deques of (t_ms, distance_cm) over the stability window
    window_max: deque[tuple[int, int]] = field(default_factory=deque)
    window_min: deque[tuple[int, int]] = field(default_factory=deque)

    def __post_init__(self: ConditioningState) -> None:
        self.readings = deque(self.readings, maxlen=self.config.median_window_samples)

    def clear_window(self: ConditioningState) -> None:
        self.window_max.clear()
        self.window_min.clear()

    def push_window(self: ConditioningState, t_ms: int, distance_cm: int) -> None:
        while self.window_max and self.window_max[-1][1] <= distance_cm:
            self.window_max.pop()
        self.window_max.append((t_ms, distance_cm))

        while self.window_min and self.window_min[-1][1] >= distance_cm:
            self.window_min.pop()
        self.window_min.append((t_ms, distance_cm))

        oldest: int = t_ms - self.config.stability_window_ms
        while self.window_max[0][0] < oldest:
            self.window_max.popleft()
        while self.window_min[0][0] < oldest:
            self.window_min.popleft()

    @property
    def window_range_cm(self: ConditioningState) -> int:
        return self.window_max[0][1] - self.window_min[0][1]


def condition(sample: SensorSample, state: ConditioningState) -> tuple[ConditionedSample, ConditioningState]:
    """Condition one sample.

    The state is updated in place and returned for convenience.

    Args:
        sample: The next raw sample of the stream.
        state: The stream's conditioning state.

    Raises:
        OutOfOrderSampleError: The sample is older than the previous one.

    Returns:
        The conditioned sample and the updated state.
    """
    config: ConditioningConfig = state.config
    t: int = sample.t_ms

    if state.last_t is not None and t < state.last_t:
        raise OutOfOrderSampleError(t, state.last_t)

    delta: int = 0 if state.last_t is None else t - state.last_t
    if state.first_t is None:
        state.first_t = t

    # Motion
    if sample.pir:
        state.last_high_t = t
    motion: bool = state.last_high_t is not None and t - state.last_high_t < config.pir_debounce_ms
    state.ms_since_motion = 0 if motion else state.ms_since_motion + delta

    # Distance
    distance: int | None = None
    if sample.distance_valid and sample.distance_cm is not None:
        state.readings.append(sample.distance_cm)
        state.last_valid_t = t
        distance = median_low(state.readings)

    # Stability
    stable: bool = False
    if distance is None:
        state.present_since = None
        state.clear_window()
    else:
        if state.present_since is None or delta > config.lidar_stale_ms:
            state.present_since = t
            state.clear_window()
        state.push_window(t, distance)
        stable = (
            t - state.present_since >= config.stability_window_ms
            and state.window_range_cm <= config.stability_band_cm
        )

    reference_t: int = state.last_valid_t if state.last_valid_t is not None else state.first_t
    lidar_stale: bool = t - reference_t > config.lidar_stale_ms

    state.last_t = t
    conditioned = ConditionedSample(
        t_ms=t,
        motion=motion,
        distance_cm=distance,
        stable=stable,
        ms_since_motion=state.ms_since_motion,
        lidar_stale=lidar_stale,
    )
    return conditioned, state


def condition_trace(trace: Trace, config: ConditioningConfig | None = None) -> list[ConditionedSample]:
    """Condition a whole trace in order."""
    state = ConditioningState(config=config or ConditioningConfig())
    conditioned: list[ConditionedSample] = []
    for sample in trace.samples:
        cs, state = condition(sample, state)
        conditioned.append(cs)
    return conditioned
