from pathlib import Path

import pytest

from pir_lidar_watch._dataclasses import SensorSample, Trace, ViolationKind
from pir_lidar_watch.exceptions import TraceFormatError
from pir_lidar_watch.trace import max_regular_delta_ms, read_trace_csv, validate_trace, write_trace_csv


def make_trace(*rows: tuple[int, bool, int | None]) -> Trace:
    return Trace(samples=tuple(SensorSample.from_reading(t, pir, d) for t, pir, d in rows))


def test_from_reading_marks_out_of_range_invalid() -> None:
    """Test that readings outside 20-800 cm are kept but flagged invalid."""
    assert SensorSample.from_reading(0, False, 19).distance_valid is False
    assert SensorSample.from_reading(0, False, 20).distance_valid is True
    assert SensorSample.from_reading(0, False, 800).distance_valid is True
    assert SensorSample.from_reading(0, False, 801).distance_valid is False
    assert SensorSample.from_reading(0, False, None).distance_valid is False


def test_clean_trace_has_no_violations() -> None:
    """Test that a regular 50 ms trace validates."""
    trace = make_trace((0, False, 200), (50, True, 150), (100, True, 148))

    report = validate_trace(trace)

    assert not report
    assert len(report) == 0


def test_duplicate_timestamp_is_ordering() -> None:
    """Test that two samples at the same time are an ordering violation at the second one."""
    trace = make_trace((0, False, 200), (50, False, 200), (50, False, 200))

    report = validate_trace(trace)

    assert [(v.kind, v.index) for v in report.violations] == [(ViolationKind.ORDERING, 2)]
    assert report.errors == report.violations


def test_negative_timestamp_is_ordering() -> None:
    """Test that a negative timestamp is reported."""
    report = validate_trace(make_trace((-50, False, 200), (0, False, 200)))

    assert report.errors[0].kind == ViolationKind.ORDERING
    assert report.errors[0].index == 0


def test_valid_flag_on_out_of_range_distance_is_range() -> None:
    """Test that a sample claiming to be valid with an impossible distance is a range violation."""
    trace = Trace(samples=(SensorSample(t_ms=0, pir=False, distance_cm=900, distance_valid=True),))

    report = validate_trace(trace)

    assert report.errors[0].kind == ViolationKind.RANGE


def test_gap_is_reported_but_not_an_error() -> None:
    """Test that a long pause between samples is a gap, not an error."""
    trace = make_trace((0, False, 200), (50, False, 200), (111, False, 200), (161, False, 200))

    report = validate_trace(trace)

    assert report.errors == ()
    assert [(v.kind, v.index) for v in report.gaps] == [(ViolationKind.GAP, 2)]


def test_gap_tolerance_is_twenty_percent() -> None:
    """Test that 60 ms is still regular at 50 ms and 61 ms is a gap."""
    assert max_regular_delta_ms(50) == 60

    assert not validate_trace(make_trace((0, False, 200), (60, False, 200)))
    assert validate_trace(make_trace((0, False, 200), (61, False, 200))).gaps


def test_csv_keeps_absent_distance_empty(tmp_path: Path) -> None:
    """Test that a missing reading is stored as an empty field and read back as None."""
    trace = make_trace((0, False, 200), (50, True, None), (100, True, 801))
    path: Path = tmp_path / "trace.csv"

    write_trace_csv(trace, path)

    assert path.read_text(encoding="utf-8") == "t_ms,pir,distance_cm,valid\n0,0,200,1\n50,1,,0\n100,1,801,0\n"
    assert read_trace_csv(path) == trace


def test_read_rejects_wrong_header(tmp_path: Path) -> None:
    """Test that a file with another header is rejected."""
    path: Path = tmp_path / "trace.csv"
    path.write_text("time,pir,distance,valid\n0,0,200,1\n", encoding="utf-8")

    with pytest.raises(TraceFormatError, match="Line 1"):
        read_trace_csv(path)


def test_read_names_the_bad_line(tmp_path: Path) -> None:
    """Test that a malformed row is reported with its line number."""
    path: Path = tmp_path / "trace.csv"
    path.write_text("t_ms,pir,distance_cm,valid\n0,0,200,1\n50,yes,200,1\n", encoding="utf-8")

    with pytest.raises(TraceFormatError, match="Line 3: pir"):
        read_trace_csv(path)


def test_read_empty_file(tmp_path: Path) -> None:
    """Test that an empty file is a format error, a header-only file is an empty trace."""
    empty: Path = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    header_only: Path = tmp_path / "header.csv"
    header_only.write_text("t_ms,pir,distance_cm,valid\n", encoding="utf-8")

    with pytest.raises(TraceFormatError):
        read_trace_csv(empty)
    assert len(read_trace_csv(header_only)) == 0
