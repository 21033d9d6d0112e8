import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from pir_lidar_watch._dataclasses import MAX_DISTANCE_CM, MIN_DISTANCE_CM, OccupancyState
from pir_lidar_watch.detector import run_trace
from pir_lidar_watch.oracle import VERIFY_CONFIG, verification_noise
from pir_lidar_watch.prng import Pcg32
from pir_lidar_watch.simulator import (
    BuiltinScenario,
    ConstantDistance,
    NoiseModel,
    ScenarioScript,
    Segment,
    builtin_scenario,
    collapse_scenario,
    load_scenario_file,
    random_scenario,
    short_visit_scenario,
    synthesize,
)
from pir_lidar_watch.trace import validate_trace

S = OccupancyState


def test_prng_is_reproducible() -> None:
    """Test that the generator gives the same stream for the same seed and a different one otherwise."""
    rng = Pcg32(42)
    first = [rng.next_u32() for _ in range(3)]

    again = Pcg32(42)
    assert [again.next_u32() for _ in range(3)] == first
    assert Pcg32(43).next_u32() != first[0]


def test_prng_bounded_stays_in_range() -> None:
    """Test that bounded draws cover the range and stay inside it."""
    rng = Pcg32(1)
    values = {rng.bounded(-2, 2) for _ in range(500)}

    assert values == {-2, -1, 0, 1, 2}
    with pytest.raises(ValueError, match="Empty range"):
        rng.bounded(3, 2)


def test_constant_room_without_noise() -> None:
    """Test that one constant segment without noise is just that distance on every tick."""
    script = ScenarioScript(segments=[Segment(duration_ms=1000, distance=ConstantDistance(cm=200))])

    trace = synthesize(script, NoiseModel.silent())

    assert [s.t_ms for s in trace.samples] == list(range(0, 1000, 50))
    assert {(s.pir, s.distance_cm, s.distance_valid) for s in trace.samples} == {(False, 200, True)}


def test_same_seed_same_trace() -> None:
    """Test that synthesis is a pure function of script, noise and period."""
    script = random_scenario(5, VERIFY_CONFIG)
    noise = verification_noise(5)

    first = synthesize(script, noise)
    second = synthesize(random_scenario(5, VERIFY_CONFIG), noise)

    assert first == second
    assert first.metadata == second.metadata
    assert synthesize(script, verification_noise(6)) != first


def test_jittered_traces_are_valid() -> None:
    """Test that timing jitter never reorders samples or opens a gap."""
    for seed in range(20):
        noise = NoiseModel(distance_sigma_cm=2.0, timing_jitter_ms=25, dropout_prob=0.05, rng_seed=seed)
        trace = synthesize(random_scenario(seed, VERIFY_CONFIG), noise)

        assert not validate_trace(trace), f"seed {seed}"


def test_noisy_readings_are_truncated_to_the_range() -> None:
    """Test that noise pushing a reading out of the sensor range is clamped and counted."""
    script = ScenarioScript(segments=[Segment(duration_ms=5000, distance=ConstantDistance(cm=MIN_DISTANCE_CM))])

    trace = synthesize(script, NoiseModel(distance_sigma_cm=5.0, rng_seed=1))

    distances = [s.distance_cm for s in trace.samples]
    assert all(d is not None and MIN_DISTANCE_CM <= d <= MAX_DISTANCE_CM for d in distances)
    assert trace.metadata["truncated_readings"] > 0
    assert trace.metadata["rng_seed"] == 1


def test_dropouts_are_counted() -> None:
    """Test that dropped readings become missing distances."""
    script = ScenarioScript(segments=[Segment(duration_ms=5000, distance=ConstantDistance(cm=200))])

    trace = synthesize(script, NoiseModel(distance_sigma_cm=0.0, dropout_prob=0.5, rng_seed=3))

    missing = sum(1 for s in trace.samples if s.distance_cm is None)
    assert missing == trace.metadata["dropped_readings"]
    assert 0 < missing < len(trace)


def test_builtin_scenarios_validate() -> None:
    """Test that every built-in script builds a valid trace."""
    for scenario in BuiltinScenario:
        trace = synthesize(builtin_scenario(scenario), NoiseModel.silent())
        assert validate_trace(trace).errors == ()


def test_invalid_script_names_the_field() -> None:
    """Test that validation errors point at the offending field."""
    with pytest.raises(ValidationError, match="duration_ms"):
        ScenarioScript.model_validate({"segments": [{"duration_ms": 0, "distance": {"kind": "CONSTANT", "cm": 100}}]})

    with pytest.raises(ValidationError, match="cm"):
        ScenarioScript.model_validate({"segments": [{"duration_ms": 50, "distance": {"kind": "CONSTANT", "cm": 900}}]})

    with pytest.raises(ValidationError, match="rate_per_min"):
        Segment.model_validate(
            {"duration_ms": 50, "distance": {"kind": "ABSENT"}, "movement": {"kind": "SPORADIC"}},
        )

    with pytest.raises(ValidationError, match="segments"):
        ScenarioScript(segments=[])


def test_load_scenario_file(tmp_path: Path) -> None:
    """Test loading a scenario with its period and noise from JSON."""
    path: Path = tmp_path / "scenario.json"
    path.write_text(
        json.dumps(
            {
                "period_ms": 100,
                "noise": {"distance_sigma_cm": 0, "rng_seed": 9},
                "segments": [
                    {"duration_ms": 1000, "distance": {"kind": "CONSTANT", "cm": 200}, "label": "vacant"},
                    {
                        "duration_ms": 1000,
                        "distance": {"kind": "LINEAR_RAMP", "from_cm": 150, "to_cm": 100},
                        "movement": {"kind": "CONTINUOUS"},
                    },
                ],
            },
        ),
        encoding="utf-8",
    )

    scenario = load_scenario_file(path)
    trace = synthesize(scenario.script, scenario.noise, scenario.period_ms)

    assert scenario.noise.rng_seed == 9  # noqa: PLR2004
    assert len(trace) == 20  # noqa: PLR2004
    # Ramp starts at its first value and moves towards the last one
    assert trace.samples[10].distance_cm == 150  # noqa: PLR2004
    assert trace.samples[15].distance_cm == 125  # noqa: PLR2004
    assert all(s.pir for s in trace.samples[10:])


def _quiet_noise(seed: int) -> NoiseModel:
    return NoiseModel(distance_sigma_cm=1.0, rng_seed=seed)


def _check_short_visits(seeds: range) -> None:
    for seed in seeds:
        trace = synthesize(short_visit_scenario(seed, VERIFY_CONFIG), _quiet_noise(seed))
        states = [e.to_state for e in run_trace(trace, VERIFY_CONFIG)]

        assert states, f"seed {seed}: nobody entered"
        assert not {S.WARNING, S.FALL_SUSPECTED, S.ALERT} & set(states), f"seed {seed}: {states}"
        assert states[-1] == S.IDLE, f"seed {seed}: {states}"


def _check_collapses(seeds: range) -> None:
    for seed in seeds:
        trace = synthesize(collapse_scenario(seed, VERIFY_CONFIG), _quiet_noise(seed))
        states = [e.to_state for e in run_trace(trace, VERIFY_CONFIG)]

        assert S.ALERT in states, f"seed {seed}: {states}"


def test_short_visits_never_alert() -> None:
    """Test that a short visit that leaves while moving ends idle without any escalation."""
    _check_short_visits(range(50))


def test_collapses_always_alert() -> None:
    """Test that lying still on the floor past the alert timer always ends in an alert."""
    _check_collapses(range(50))


@pytest.mark.slow
def test_short_visits_never_alert_many_seeds() -> None:
    """Test the short visit property on 500 seeds."""
    _check_short_visits(range(500))


@pytest.mark.slow
def test_collapses_always_alert_many_seeds() -> None:
    """Test the collapse property on 500 seeds."""
    _check_collapses(range(500))
