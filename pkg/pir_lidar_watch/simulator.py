"""Synthetic sensor traces from segment scripts.

A script is a list of segments. Each segment holds a distance profile and a movement
pattern for a fixed duration, so a bathroom visit reads like its annotation: vacant,
enter, sit, exit. The five canonical experiments are built in, and random_scenario draws
arbitrary visits for fuzzing the detector.
"""

from __future__ import annotations

import json
import math
from enum import StrEnum
from typing import TYPE_CHECKING, Annotated, Literal

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pir_lidar_watch._dataclasses import (
    DEFAULT_PERIOD_MS,
    MAX_DISTANCE_CM,
    MIN_DISTANCE_CM,
    SensorSample,
    Trace,
)
from pir_lidar_watch.detector import DetectorConfig
from pir_lidar_watch.prng import Pcg32
from pir_lidar_watch.trace import max_regular_delta_ms

if TYPE_CHECKING:
    from pathlib import Path

DistanceCm = Annotated[int, Field(ge=MIN_DISTANCE_CM, le=MAX_DISTANCE_CM)]

# Levels used by the built-in experiments
VACANT_CM: int = 200
SEATED_CM: int = 65
FALLEN_CM: int = 160


class ConstantDistance(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["CONSTANT"] = "CONSTANT"
    cm: DistanceCm


class LinearRamp(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["LINEAR_RAMP"] = "LINEAR_RAMP"
    from_cm: DistanceCm
    to_cm: DistanceCm


class AbsentDistance(BaseModel):
    """Nothing in the beam that the LiDAR can range, every reading is missing."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ABSENT"] = "ABSENT"


DistanceProfile = Annotated[ConstantDistance | LinearRamp | AbsentDistance, Field(discriminator="kind")]


class MovementKind(StrEnum):
    NONE = "NONE"
    CONTINUOUS = "CONTINUOUS"
    SPORADIC = "SPORADIC"


class Movement(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: MovementKind = MovementKind.NONE
    rate_per_min: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_rate(self: Movement) -> Movement:
        if self.kind == MovementKind.SPORADIC and self.rate_per_min <= 0:
            msg: str = "SPORADIC movement needs rate_per_min > 0"
            raise ValueError(msg)
        return self


NO_MOVEMENT = Movement()
CONTINUOUS = Movement(kind=MovementKind.CONTINUOUS)


class Segment(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    duration_ms: int = Field(gt=0)
    distance: DistanceProfile
    movement: Movement = NO_MOVEMENT
    label: str = ""

    def distance_at(self: Segment, offset_ms: int) -> float | None:
        """Get the profile value at an offset into the segment, None while absent."""
        match self.distance:
            case ConstantDistance(cm=cm):
                return float(cm)
            case LinearRamp(from_cm=from_cm, to_cm=to_cm):
                return from_cm + (to_cm - from_cm) * offset_ms / self.duration_ms
            case _:
                return None


class ScenarioScript(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    segments: list[Segment] = Field(min_length=1)

    @property
    def duration_ms(self: ScenarioScript) -> int:
        return sum(segment.duration_ms for segment in self.segments)


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    distance_sigma_cm: float = Field(default=2.0, ge=0.0)
    dropout_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    pir_false_high_prob: float = Field(default=0.0, ge=0.0, le=1.0)

    # Uniform +- jitter on every timestamp
    timing_jitter_ms: int = Field(default=0, ge=0)
    rng_seed: int = Field(default=0, ge=0)

    @classmethod
    def silent(cls: type[NoiseModel], rng_seed: int = 0) -> NoiseModel:
        """No sensor noise at all. The seed still drives sporadic movement."""
        return cls(distance_sigma_cm=0.0, rng_seed=rng_seed)


class ScenarioFile(BaseModel):
    """A scenario as stored on disk: period, segments and noise."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    period_ms: int = Field(default=DEFAULT_PERIOD_MS, gt=0)
    segments: list[Segment] = Field(min_length=1)
    noise: NoiseModel = NoiseModel()

    @property
    def script(self: ScenarioFile) -> ScenarioScript:
        return ScenarioScript(segments=self.segments)


def load_scenario_file(path: Path) -> ScenarioFile:
    """Load and validate a scenario JSON file.

    Raises:
        pydantic.ValidationError: The file doesn't describe a valid scenario, the error names the field.
        json.JSONDecodeError: The file isn't JSON.

    Returns:
        The validated scenario.
    """
    data = json.loads(path.read_text(encoding="utf-8"))
    scenario = ScenarioFile.model_validate(data)
    logger.debug("Loaded scenario {} with {} segments", path, len(scenario.segments))
    return scenario


def synthesize(script: ScenarioScript, noise: NoiseModel, period_ms: int = DEFAULT_PERIOD_MS) -> Trace:
    """Render a script into a sampled trace.

    Per tick the random draws are made in a fixed order (jitter, dropout, distance noise,
    PIR false high, sporadic pulse), and a draw is only made when its parameter is set,
    so the trace is a pure function of the script, the noise model and the period.

    Args:
        script: What happens in the room.
        noise: Sensor noise and the rng seed.
        period_ms: Nominal sampling period.

    Returns:
        The trace, with the seed and noise counters in its metadata.
    """
    rng = Pcg32(noise.rng_seed)
    max_delta: int = max_regular_delta_ms(period_ms)

    samples: list[SensorSample] = []
    truncated: int = 0
    dropped: int = 0
    previous_t: int | None = None

    segment_start: int = 0
    for segment in script.segments:
        segment_end: int = segment_start + segment.duration_ms
        pulse_prob: float = segment.movement.rate_per_min * period_ms / 60_000

        # Nominal tick k sits at k * period, the first tick inside this segment
        nominal: int = -(-segment_start // period_ms) * period_ms
        while nominal < segment_end:
            t: int = nominal
            if noise.timing_jitter_ms:
                t += rng.bounded(-noise.timing_jitter_ms, noise.timing_jitter_ms)
            t = max(t, 0) if previous_t is None else min(max(t, previous_t + 1), previous_t + max_delta)

            value: float | None = segment.distance_at(nominal - segment_start)
            if noise.dropout_prob and rng.chance(noise.dropout_prob) and value is not None:
                value = None
                dropped += 1
            if noise.distance_sigma_cm and value is not None:
                value += rng.gauss(noise.distance_sigma_cm)

            distance: int | None = None
            if value is not None:
                distance = math.floor(value + 0.5)
                if not MIN_DISTANCE_CM <= distance <= MAX_DISTANCE_CM:
                    distance = min(max(distance, MIN_DISTANCE_CM), MAX_DISTANCE_CM)
                    truncated += 1

            pir: bool = segment.movement.kind == MovementKind.CONTINUOUS
            if noise.pir_false_high_prob and rng.chance(noise.pir_false_high_prob):
                pir = True
            if segment.movement.kind == MovementKind.SPORADIC and rng.chance(pulse_prob):
                pir = True

            samples.append(SensorSample.from_reading(t, pir, distance))
            previous_t = t
            nominal += period_ms

        segment_start = segment_end

    if truncated:
        logger.debug("Truncated {} noisy readings to the sensor range", truncated)

    metadata = {"rng_seed": noise.rng_seed, "truncated_readings": truncated, "dropped_readings": dropped}
    return Trace(samples=tuple(samples), nominal_period_ms=period_ms, metadata=metadata)


class BuiltinScenario(StrEnum):
    EXP1 = "EXP1"
    EXP2 = "EXP2"
    EXP3 = "EXP3"
    EXP4 = "EXP4"
    EXP5 = "EXP5"


def _constant(duration_ms: int, cm: int, movement: Movement = NO_MOVEMENT, label: str = "") -> Segment:
    return Segment(duration_ms=duration_ms, distance=ConstantDistance(cm=cm), movement=movement, label=label)


def _ramp(duration_ms: int, from_cm: int, to_cm: int, movement: Movement = NO_MOVEMENT, label: str = "") -> Segment:
    distance = LinearRamp(from_cm=from_cm, to_cm=to_cm)
    return Segment(duration_ms=duration_ms, distance=distance, movement=movement, label=label)


def _absent(duration_ms: int, movement: Movement = NO_MOVEMENT, label: str = "") -> Segment:
    return Segment(duration_ms=duration_ms, distance=AbsentDistance(), movement=movement, label=label)


def builtin_scenario(scenario: BuiltinScenario) -> ScenarioScript:
    """Get the script of one of the five bathroom experiments.

    EXP1: normal visit, sit down and leave again.
    EXP2: sit without moving for more than ten minutes.
    EXP3: a 20 second visit that never sits down.
    EXP4: sit, then fall sideways out of the seated band.
    EXP5: walk in and collapse right away.
    """
    sporadic = Movement(kind=MovementKind.SPORADIC, rate_per_min=6.0)
    vacant = _constant(5_000, VACANT_CM, label="vacant")

    match scenario:
        case BuiltinScenario.EXP1:
            segments = [
                vacant,
                _ramp(2_000, 150, SEATED_CM, CONTINUOUS, "enter"),
                _constant(90_000, SEATED_CM, sporadic, "sit"),
                _constant(1_000, FALLEN_CM, CONTINUOUS, "exit"),
                _constant(5_000, FALLEN_CM, label="left"),
            ]
        case BuiltinScenario.EXP2:
            segments = [
                vacant,
                _ramp(2_000, 150, SEATED_CM, CONTINUOUS, "enter"),
                _constant(660_000, SEATED_CM, label="sit still"),
            ]
        case BuiltinScenario.EXP3:
            zigzag = [
                _constant(2_000, cm, CONTINUOUS, "move around")
                for cm in (100, 125, 95, 120, 100, 125, 95, 120)
            ]
            segments = [
                vacant,
                _ramp(2_000, 150, 100, CONTINUOUS, "enter"),
                *zigzag,
                _constant(2_000, VACANT_CM, CONTINUOUS, "exit"),
                _constant(15_000, VACANT_CM, label="vacant"),
            ]
        case BuiltinScenario.EXP4:
            segments = [
                vacant,
                _ramp(2_000, 150, SEATED_CM, CONTINUOUS, "enter"),
                _constant(60_000, SEATED_CM, sporadic, "sit"),
                _constant(2_000, SEATED_CM, label="still"),
                _constant(660_000, FALLEN_CM, label="fallen"),
            ]
        case BuiltinScenario.EXP5:
            segments = [
                vacant,
                _ramp(1_500, 150, 110, CONTINUOUS, "enter"),
                _constant(1_000, 110, label="stop"),
                _ramp(1_000, 110, 170, label="collapse"),
                _constant(660_000, 170, label="on the floor"),
            ]

    return ScenarioScript(segments=segments)


class _ScriptWriter:
    """Appends segments for random visits and tracks where the person is."""

    def __init__(self: _ScriptWriter, rng: Pcg32, config: DetectorConfig) -> None:
        self.rng = rng
        self.config = config
        self.segments: list[Segment] = []
        self.vacant_cm: int = rng.bounded(180, 250)
        self.cm: int = self.vacant_cm

    def seconds(self: _ScriptWriter, low: float, high: float) -> int:
        """Draw a duration in whole 50 ms steps."""
        steps: int = round(low * 20)
        return self.rng.bounded(steps, max(steps, round(high * 20))) * 50

    def still_pause(self: _ScriptWriter) -> None:
        self.segments.append(_constant(self.seconds(1, 3), self.cm, label="still"))

    def vacancy(self: _ScriptWriter, duration_ms: int) -> None:
        self.segments.append(_constant(duration_ms, self.vacant_cm, label="vacant"))
        self.cm = self.vacant_cm

    def enter(self: _ScriptWriter, to_cm: int) -> None:
        start: int = self.rng.bounded(135, 150)
        self.segments.append(_ramp(self.seconds(1, 3), start, to_cm, CONTINUOUS, "enter"))
        self.cm = to_cm

    def move_to(self: _ScriptWriter, to_cm: int, label: str) -> None:
        self.segments.append(_ramp(self.seconds(0.5, 2), self.cm, to_cm, CONTINUOUS, label))
        self.cm = to_cm

    def stay(self: _ScriptWriter, duration_ms: int, label: str) -> None:
        movement: Movement = self.rng.choice(
            [
                NO_MOVEMENT,
                CONTINUOUS,
                Movement(kind=MovementKind.SPORADIC, rate_per_min=self.rng.bounded(2, 12)),
            ],
        )
        self.segments.append(_constant(duration_ms, self.cm, movement, label))

    def leave(self: _ScriptWriter) -> None:
        self.segments.append(_constant(self.seconds(1, 2), self.vacant_cm, CONTINUOUS, "exit"))
        self.cm = self.vacant_cm

    def collapse(self: _ScriptWriter, hold_ms: int) -> None:
        floor_cm: int = self.rng.bounded(self.config.fall_distance_cm + 10, 300)
        self.segments.append(_ramp(self.seconds(0.5, 2), self.cm, floor_cm, label="collapse"))
        self.segments.append(_constant(hold_ms, floor_cm, label="on the floor"))
        self.cm = floor_cm

    def script(self: _ScriptWriter) -> ScenarioScript:
        return ScenarioScript(segments=self.segments)


def _random_posture(writer: _ScriptWriter) -> None:
    config: DetectorConfig = writer.config
    if writer.rng.chance(0.6):
        writer.move_to(writer.rng.bounded(config.seated_min_cm + 5, config.seated_max_cm - 5), "sit")
    else:
        writer.move_to(writer.rng.bounded(config.seated_max_cm + 10, config.exit_distance_cm - 5), "stand")


def _random_visit(writer: _ScriptWriter) -> bool:  # noqa: C901
    """Append one random episode. Returns False once the scenario can't go on (an alert latched)."""
    rng: Pcg32 = writer.rng
    config: DetectorConfig = writer.config
    kind: str = rng.choice(["visit", "short", "linger", "fall", "collapse", "dropout"])

    writer.enter(rng.bounded(config.seated_min_cm + 5, config.exit_distance_cm - 5))

    if kind == "collapse":
        writer.still_pause()
        writer.collapse(config.alert_ms + writer.seconds(1, 5))
        return False

    for _ in range(rng.bounded(1, 3)):
        _random_posture(writer)
        long_stay: bool = kind == "visit" and rng.chance(0.3)
        high: float = (config.alert_ms if long_stay else config.warning_ms // 4) / 1000
        writer.stay(writer.seconds(1, high), "posture")

    if kind == "linger":
        # Sit, then hover right at the exit boundary while moving
        writer.move_to(rng.bounded(config.seated_min_cm + 5, config.seated_max_cm - 5), "sit")
        writer.stay(writer.seconds(1, 5), "sit")
        linger_cm: int = rng.bounded(config.exit_distance_cm + 1, config.exit_distance_cm + config.hysteresis_cm)
        writer.move_to(linger_cm, "linger")
        writer.stay(writer.seconds(1, 5), "linger")
        _random_posture(writer)
    elif kind == "dropout":
        writer.segments.append(_absent(rng.bounded(2, config.sensor_fault_ms * 3 // 50) * 50, label="dropout"))
    elif kind == "fall":
        writer.still_pause()
        recovered: bool = rng.chance(0.5)
        hold_ms: int = writer.seconds(1, config.fall_suspect_ms * 1.5 / 1000) if recovered else config.alert_ms + 2_000
        writer.collapse(hold_ms)
        if not recovered:
            return False
        writer.move_to(rng.bounded(config.seated_min_cm + 5, config.exit_distance_cm - 5), "get up")

    if rng.chance(0.2):
        # Step out and come back before the exit is confirmed
        writer.leave()
        writer.vacancy(writer.seconds(0.5, config.exit_confirm_ms * 1.5 / 1000))
        writer.enter(rng.bounded(config.seated_min_cm + 5, config.exit_distance_cm - 5))
        writer.stay(writer.seconds(1, 5), "back")

    writer.leave()
    writer.vacancy(writer.seconds(1, config.exit_confirm_ms * 2 / 1000))
    return True


def random_scenario(seed: int, config: DetectorConfig | None = None) -> ScenarioScript:
    """Draw a random script: one to three episodes with vacancy in between.

    Episodes cover ordinary visits (some long enough to warn), short visits, lingering at
    the exit boundary, falls with and without recovery, collapses right after entering and
    LiDAR dropouts. Durations are scaled to the detector timers so every rule can fire.

    Args:
        seed: The only source of randomness.
        config: The detector config the scenario should exercise.

    Returns:
        The script.
    """
    writer = _ScriptWriter(Pcg32(seed), config or DetectorConfig())
    writer.vacancy(writer.seconds(2, 6))
    for _ in range(writer.rng.bounded(1, 3)):
        if not _random_visit(writer):
            break
    return writer.script()


def short_visit_scenario(seed: int, config: DetectorConfig | None = None) -> ScenarioScript:
    """Draw a visit that ends well before the warning timer and leaves while moving.

    The vacancy after the visit runs past the alert timer.
    """
    config = config or DetectorConfig()
    writer = _ScriptWriter(Pcg32(seed), config)
    writer.vacancy(writer.seconds(2, 6))
    writer.enter(writer.rng.bounded(config.seated_min_cm + 5, config.exit_distance_cm - 5))

    # Entering, moving around and leaving take at most 13 s, the stays share what is left
    budget_ms: int = max(config.warning_ms - 15_000, 200)
    for _ in range(writer.rng.bounded(1, 4)):
        _random_posture(writer)
        stay_ms: int = min(writer.seconds(0.05, budget_ms / 4000), budget_ms // 4)
        writer.stay(max(stay_ms, 50), "posture")

    writer.leave()
    writer.vacancy(config.alert_ms + writer.seconds(1, 10))
    return writer.script()


def collapse_scenario(seed: int, config: DetectorConfig | None = None) -> ScenarioScript:
    """Draw a visit that ends with the person motionless beyond the fall distance for longer than the alert timer."""
    config = config or DetectorConfig()
    writer = _ScriptWriter(Pcg32(seed), config)
    writer.vacancy(writer.seconds(2, 6))
    writer.enter(writer.rng.bounded(config.seated_min_cm + 5, config.exit_distance_cm - 5))

    for _ in range(writer.rng.bounded(0, 2)):
        _random_posture(writer)
        writer.stay(writer.seconds(1, config.warning_ms / 4000), "posture")

    writer.still_pause()
    writer.collapse(config.alert_ms + writer.seconds(1, 5))
    return writer.script()
