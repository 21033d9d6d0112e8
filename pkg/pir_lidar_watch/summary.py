from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING

from pir_lidar_watch._dataclasses import OccupancyState, Reason

if TYPE_CHECKING:
    from collections.abc import Iterable

    from pir_lidar_watch._dataclasses import DetectionEvent

# Time in these states counts as sitting
_SITTING_STATES: frozenset[OccupancyState] = frozenset({OccupancyState.SEATED, OccupancyState.WARNING})


class VisitOutcome(StrEnum):
    COMPLETED = "COMPLETED"
    SHORT_VISIT = "SHORT_VISIT"
    ALERT = "ALERT"
    SENSOR_FAULT = "SENSOR_FAULT"
    ONGOING = "ONGOING"


@dataclass(frozen=True, slots=True)
class VisitSummary:
    start_ms: int
    end_ms: int | None
    seated_ms: int
    warned: bool
    fall_suspected: bool
    outcome: VisitOutcome

    @property
    def duration_ms(self: VisitSummary) -> int | None:
        return None if self.end_ms is None else self.end_ms - self.start_ms


@dataclass(slots=True)
class _OpenVisit:
    start_ms: int
    seated_ms: int = 0
    sitting_since: int | None = None
    warned: bool = False
    fall_suspected: bool = False
    alerted: bool = False

    def close(self: _OpenVisit, end_ms: int | None, outcome: VisitOutcome) -> VisitSummary:
        seated_ms: int = self.seated_ms
        if self.sitting_since is not None and end_ms is not None:
            seated_ms += end_ms - self.sitting_since
        return VisitSummary(
            start_ms=self.start_ms,
            end_ms=end_ms,
            seated_ms=seated_ms,
            warned=self.warned,
            fall_suspected=self.fall_suspected,
            outcome=VisitOutcome.ALERT if self.alerted else outcome,
        )


def summarize_visits(events: Iterable[DetectionEvent], end_ms: int | None = None) -> list[VisitSummary]:
    """Group detection events into visits for routine tracking.

    A visit runs from an entry out of IDLE until the detector is back in IDLE. Re-entering
    before an exit is confirmed continues the same visit.

    Args:
        events: Detection events in time order.
        end_ms: When the trace ended, used to count the sitting time of a visit still open.

    Returns:
        One summary per visit, oldest first.
    """
    visits: list[VisitSummary] = []
    visit: _OpenVisit | None = None

    for event in events:
        if visit is None:
            if event.to_state != OccupancyState.ENTERED:
                continue
            visit = _OpenVisit(start_ms=event.t_ms)

        if visit.sitting_since is not None and event.to_state not in _SITTING_STATES:
            visit.seated_ms += event.t_ms - visit.sitting_since
            visit.sitting_since = None
        elif visit.sitting_since is None and event.to_state in _SITTING_STATES:
            visit.sitting_since = event.t_ms

        match event.to_state:
            case OccupancyState.WARNING:
                visit.warned = True
            case OccupancyState.FALL_SUSPECTED:
                visit.fall_suspected = True
            case OccupancyState.ALERT:
                visit.alerted = True
            case OccupancyState.IDLE:
                if event.reason == Reason.SHORT_VISIT_DISCARD:
                    outcome = VisitOutcome.SHORT_VISIT
                elif event.from_state == OccupancyState.SENSOR_FAULT:
                    outcome = VisitOutcome.SENSOR_FAULT
                else:
                    outcome = VisitOutcome.COMPLETED
                visits.append(visit.close(event.t_ms, outcome))
                visit = None

    if visit is not None:
        visits.append(visit.close(None, VisitOutcome.ONGOING) if end_ms is None else _close_open(visit, end_ms))

    return visits


def _close_open(visit: _OpenVisit, end_ms: int) -> VisitSummary:
    """Summarize a visit the trace ended in the middle of."""
    summary = visit.close(end_ms, VisitOutcome.ONGOING)
    return VisitSummary(
        start_ms=summary.start_ms,
        end_ms=None,
        seated_ms=summary.seated_ms,
        warned=summary.warned,
        fall_suspected=summary.fall_suspected,
        outcome=summary.outcome,
    )
