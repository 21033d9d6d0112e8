from __future__ import annotations

import csv
from typing import TYPE_CHECKING

from loguru import logger

from pir_lidar_watch._dataclasses import (
    DEFAULT_PERIOD_MS,
    SensorSample,
    Trace,
    ValidationReport,
    Violation,
    ViolationKind,
    distance_in_range,
)
from pir_lidar_watch.exceptions import TraceFormatError

if TYPE_CHECKING:
    from pathlib import Path

TRACE_CSV_HEADER: list[str] = ["t_ms", "pir", "distance_cm", "valid"]

# Deltas up to nominal period + 20% are regular, anything above that is a gap
GAP_TOLERANCE_PERCENT: int = 20


def max_regular_delta_ms(period_ms: int) -> int:
    """Get the largest delta between two samples that is not a gap."""
    return period_ms * (100 + GAP_TOLERANCE_PERCENT) // 100


def validate_trace(trace: Trace) -> ValidationReport:
    """Check a trace against its invariants.

    Violations are returned as data. The trace is never modified.

    Args:
        trace: The trace to check.

    Returns:
        A report that is empty if the trace is fine.
    """
    violations: list[Violation] = []
    max_regular_delta: int = max_regular_delta_ms(trace.nominal_period_ms)

    previous: SensorSample | None = None
    for index, sample in enumerate(trace.samples):
        if sample.t_ms < 0:
            violations.append(Violation(ViolationKind.ORDERING, index, f"negative timestamp {sample.t_ms}ms"))

        if sample.distance_valid and not distance_in_range(sample.distance_cm):
            violations.append(
                Violation(ViolationKind.RANGE, index, f"valid distance {sample.distance_cm}cm is outside 20-800cm"),
            )

        if previous is not None:
            delta: int = sample.t_ms - previous.t_ms
            if delta <= 0:
                detail = f"t={sample.t_ms}ms does not come after t={previous.t_ms}ms"
                violations.append(Violation(ViolationKind.ORDERING, index, detail))
            elif delta > max_regular_delta:
                detail = f"{delta}ms since previous sample (nominal {trace.nominal_period_ms}ms)"
                violations.append(Violation(ViolationKind.GAP, index, detail))

        previous = sample

    return ValidationReport(tuple(violations))


def write_trace_csv(trace: Trace, path: Path) -> None:
    """Write a trace in the trace CSV format (UTF-8, LF line endings)."""
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_CSV_HEADER)
        for sample in trace.samples:
            distance: str = "" if sample.distance_cm is None else str(sample.distance_cm)
            writer.writerow([sample.t_ms, int(sample.pir), distance, int(sample.distance_valid)])

    logger.debug("Wrote {} samples to {}", len(trace.samples), path)


def _parse_flag(value: str, column: str, line: int) -> bool:
    if value not in {"0", "1"}:
        msg: str = f"Line {line}: {column} must be 0 or 1, got {value!r}"
        raise TraceFormatError(msg)
    return value == "1"


def _parse_int(value: str, column: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        msg: str = f"Line {line}: {column} must be an integer, got {value!r}"
        raise TraceFormatError(msg) from None


def read_trace_csv(path: Path, nominal_period_ms: int = DEFAULT_PERIOD_MS) -> Trace:
    """Read a trace CSV file.

    Args:
        path: The file to read.
        nominal_period_ms: The sampling period the trace was recorded with.

    Raises:
        TraceFormatError: The header or a row is malformed.

    Returns:
        The trace, exactly as stored. Use validate_trace to check it.
    """
    samples: list[SensorSample] = []
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            msg: str = f"{path} is empty, expected the header {','.join(TRACE_CSV_HEADER)}"
            raise TraceFormatError(msg)
        if header != TRACE_CSV_HEADER:
            msg = f"Line 1: expected header {','.join(TRACE_CSV_HEADER)}, got {','.join(header)}"
            raise TraceFormatError(msg)

        for line, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_CSV_HEADER):
                msg = f"Line {line}: expected {len(TRACE_CSV_HEADER)} columns, got {len(row)}"
                raise TraceFormatError(msg)

            t_raw, pir_raw, distance_raw, valid_raw = row
            distance: int | None = None if distance_raw == "" else _parse_int(distance_raw, "distance_cm", line)
            samples.append(
                SensorSample(
                    t_ms=_parse_int(t_raw, "t_ms", line),
                    pir=_parse_flag(pir_raw, "pir", line),
                    distance_cm=distance,
                    distance_valid=_parse_flag(valid_raw, "valid", line),
                ),
            )

    logger.debug("Read {} samples from {}", len(samples), path)
    return Trace(samples=tuple(samples), nominal_period_ms=nominal_period_ms)
