from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

    from pir_lidar_watch._dataclasses import ValidationReport


class PirLidarWatchError(Exception):
    """Base class for every error raised by this package."""


class OutOfOrderSampleError(PirLidarWatchError, ValueError):
    """A sample arrived with a timestamp earlier than the previous one."""

    def __init__(self: OutOfOrderSampleError, t_ms: int, previous_t_ms: int) -> None:
        self.t_ms = t_ms
        self.previous_t_ms = previous_t_ms
        msg: str = f"Sample at t={t_ms}ms arrived after t={previous_t_ms}ms"
        super().__init__(msg)


class TraceValidationError(PirLidarWatchError, ValueError):
    """The trace has ordering or range violations and can't be processed."""

    def __init__(self: TraceValidationError, report: ValidationReport) -> None:
        self.report = report
        first = report.errors[0]
        msg: str = f"Trace has {len(report.errors)} violation(s), first: {first.kind} at index {first.index}: {first.detail}"
        super().__init__(msg)


class TraceFormatError(PirLidarWatchError, ValueError):
    """A trace CSV file is malformed."""


class FrameFieldError(PirLidarWatchError, ValueError):
    """A LiDAR frame field doesn't fit in 16 bits."""


class InvalidConfigError(PirLidarWatchError, ValueError):
    """A configuration violates one or more of its invariants."""

    def __init__(self: InvalidConfigError, violations: list[str]) -> None:
        self.violations = violations
        msg: str = "Invalid configuration: " + "; ".join(violations)
        super().__init__(msg)


class EventLogWriteError(PirLidarWatchError, OSError):
    """Appending to the event log failed. Nothing was written, so the append can be retried."""


class EventLogCorruptError(PirLidarWatchError, ValueError):
    """A complete line of an event log is not an envelope."""

    def __init__(self: EventLogCorruptError, path: Path, line_number: int, detail: str) -> None:
        self.path = path
        self.line_number = line_number
        msg: str = f"{path}: line {line_number} is not an event envelope: {detail}"
        super().__init__(msg)


class DeliveryError(PirLidarWatchError, ConnectionError):
    """An alert envelope could not be delivered within the allowed attempts."""
