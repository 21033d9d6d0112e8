"""What each built-in experiment must produce.

Used by the robustness sweep and the golden tests. A check returns a list of problems,
an empty list means the run reproduced the experiment.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from pir_lidar_watch._dataclasses import OccupancyState
from pir_lidar_watch.conditioning import ConditioningConfig, condition_trace
from pir_lidar_watch.detector import DetectorConfig
from pir_lidar_watch.simulator import BuiltinScenario

if TYPE_CHECKING:
    from pir_lidar_watch._dataclasses import DetectionEvent, Trace

S = OccupancyState

EXPECTED_STATES: dict[BuiltinScenario, list[OccupancyState]] = {
    BuiltinScenario.EXP1: [S.ENTERED, S.SEATED, S.EXITED],
    BuiltinScenario.EXP2: [S.ENTERED, S.SEATED, S.WARNING, S.ALERT],
    BuiltinScenario.EXP3: [S.ENTERED, S.EXITED, S.IDLE],
    BuiltinScenario.EXP4: [S.ENTERED, S.SEATED, S.FALL_SUSPECTED, S.ALERT],
    BuiltinScenario.EXP5: [S.ENTERED, S.FALL_SUSPECTED, S.ALERT],
}

# Timers measured from the last tick with motion: (state, DetectorConfig field)
TIMED_STATES: dict[BuiltinScenario, list[tuple[OccupancyState, str]]] = {
    BuiltinScenario.EXP2: [(S.WARNING, "warning_ms"), (S.ALERT, "alert_ms")],
    BuiltinScenario.EXP4: [(S.FALL_SUSPECTED, "fall_suspect_ms"), (S.ALERT, "alert_ms")],
    BuiltinScenario.EXP5: [(S.ALERT, "alert_ms")],
}


def last_motion_before(trace: Trace, t_ms: int, conditioning: ConditioningConfig | None = None) -> int | None:
    """Get the time of the last conditioned tick with motion before t_ms."""
    last: int | None = None
    for cs in condition_trace(trace, conditioning):
        if cs.t_ms >= t_ms:
            break
        if cs.motion:
            last = cs.t_ms
    return last


def golden_problems(
    scenario: BuiltinScenario,
    trace: Trace,
    events: list[DetectionEvent],
    config: DetectorConfig | None = None,
    conditioning: ConditioningConfig | None = None,
) -> list[str]:
    """Check a run of a built-in scenario against the outcome of its experiment.

    Args:
        scenario: Which experiment the trace was synthesized from.
        trace: The trace.
        events: The detector events for the trace.
        config: The detector config the events were produced with.
        conditioning: The conditioning config the events were produced with.

    Returns:
        What went wrong, empty if nothing did.
    """
    config = config or DetectorConfig()
    problems: list[str] = []

    states = [event.to_state for event in events]
    if states != EXPECTED_STATES[scenario]:
        problems.append(f"expected states {[str(s) for s in EXPECTED_STATES[scenario]]}, got {[str(s) for s in states]}")

    for state, timer in TIMED_STATES.get(scenario, []):
        event = next((e for e in events if e.to_state == state), None)
        if event is None:
            continue  # Already reported above

        loss = last_motion_before(trace, event.t_ms, conditioning)
        if loss is None:
            problems.append(f"no motion before {state}")
            continue

        expected_t: int = loss + getattr(config, timer)
        if abs(event.t_ms - expected_t) > trace.nominal_period_ms:
            problems.append(f"{state} at {event.t_ms}ms, expected {expected_t}ms +- {trace.nominal_period_ms}ms")

    return problems
