import dataclasses
import json
import os
from pathlib import Path

import pytest

from pir_lidar_watch._dataclasses import DetectionEvent, OccupancyState, Reason
from pir_lidar_watch.detector import run_trace
from pir_lidar_watch.event_log import EventLog, read_event_log
from pir_lidar_watch.exceptions import EventLogCorruptError, EventLogWriteError
from pir_lidar_watch.simulator import BuiltinScenario, NoiseModel, builtin_scenario, synthesize

S = OccupancyState

ENTERED = DetectionEvent(t_ms=5150, from_state=S.IDLE, to_state=S.ENTERED, reason=Reason.ENTRY_RULE)
SEATED = DetectionEvent(t_ms=9900, from_state=S.ENTERED, to_state=S.SEATED, reason=Reason.SEATED_RULE)
EXITED = DetectionEvent(t_ms=97100, from_state=S.SEATED, to_state=S.EXITED, reason=Reason.EXIT_RULE)


def test_append_and_read_back(tmp_path: Path) -> None:
    """Test that appended events come back in order with consecutive sequence numbers."""
    path: Path = tmp_path / "events.jsonl"

    with EventLog(path, "room-1") as log:
        envelopes = [log.append_event(event) for event in (ENTERED, SEATED, EXITED)]

    assert [e.sequence for e in envelopes] == [0, 1, 2]
    assert read_event_log(path) == envelopes
    assert [e.event for e in read_event_log(path)] == [ENTERED, SEATED, EXITED]


def test_line_format(tmp_path: Path) -> None:
    """Test the exact bytes of one log line."""
    path: Path = tmp_path / "events.jsonl"

    with EventLog(path, "room-1") as log:
        log.append_event(ENTERED)

    expected = '{"source_id":"room-1","seq":0,"t_ms":5150,"from":"IDLE","to":"ENTERED","reason":"ENTRY_RULE"}\n'
    assert path.read_text(encoding="utf-8") == expected


def test_reopen_continues_the_sequence(tmp_path: Path) -> None:
    """Test that a reopened log picks up after the highest sequence number of its source."""
    path: Path = tmp_path / "events.jsonl"
    with EventLog(path, "room-2") as log:
        for event in (ENTERED, SEATED, EXITED):
            log.append_event(event)
    with EventLog(path, "room-1") as log:
        log.append_event(ENTERED)

    with EventLog(path, "room-1") as log:
        envelope = log.append_event(SEATED)

    assert envelope.sequence == 1


def test_torn_last_line_is_repaired(tmp_path: Path) -> None:
    """Test that a line cut off by a crash is ignored by readers and removed on reopen."""
    path: Path = tmp_path / "events.jsonl"
    with EventLog(path, "room-1") as log:
        log.append_event(ENTERED)
        log.append_event(SEATED)
    intact: bytes = path.read_bytes()

    # Simulate power loss halfway through the third append
    with path.open("ab") as f:
        f.write(b'{"source_id":"room-1","seq":2,"t_ms":97')

    assert len(read_event_log(path)) == 2  # noqa: PLR2004

    with EventLog(path, "room-1") as log:
        assert path.read_bytes() == intact
        envelope = log.append_event(EXITED)

    assert envelope.sequence == 2  # noqa: PLR2004
    assert [e.sequence for e in read_event_log(path)] == [0, 1, 2]


@pytest.mark.parametrize("short_write", [False, True])
def test_failed_append_leaves_no_trace(tmp_path: Path, monkeypatch: pytest.MonkeyPatch, short_write: bool) -> None:
    """Test that an append interrupted at any byte leaves the log as it was and can be retried."""
    real_write = os.write

    # Length of the third line, a cut anywhere in it is a crash point
    sizing: Path = tmp_path / "sizing.jsonl"
    with EventLog(sizing, "room-1") as log:
        log.append_event(ENTERED)
        log.append_event(SEATED)
        size_before: int = sizing.stat().st_size
        log.append_event(EXITED)
    line_length: int = sizing.stat().st_size - size_before

    for cut in range(line_length):
        path: Path = tmp_path / f"events-{cut}.jsonl"
        with EventLog(path, "room-1") as log:
            log.append_event(ENTERED)
            log.append_event(SEATED)
            before: bytes = path.read_bytes()

            def broken_write(fd: int, data: bytes, cut: int = cut) -> int:
                written: int = real_write(fd, data[:cut])
                if short_write:
                    return written
                msg = "No space left on device"
                raise OSError(msg)

            with monkeypatch.context() as m:
                m.setattr(os, "write", broken_write)
                with pytest.raises(EventLogWriteError):
                    log.append_event(EXITED)

            # Check that the partial line is gone and the sequence number was not used
            assert path.read_bytes() == before
            assert log.append_event(EXITED).sequence == 2  # noqa: PLR2004

        assert [e.event for e in read_event_log(path)] == [ENTERED, SEATED, EXITED]


def test_killed_between_appends_leaves_a_prefix(tmp_path: Path) -> None:
    """Test that a log killed after any of 100 appends out of 1000 holds exactly the events appended so far."""
    path: Path = tmp_path / "events.jsonl"
    snapshots: dict[int, bytes] = {}

    with EventLog(path, "room-1") as log:
        for count in range(1, 1001):
            log.append_event(dataclasses.replace((ENTERED, SEATED, EXITED)[count % 3], t_ms=count * 50))
            if count % 10 == 0:
                snapshots[count] = path.read_bytes()

    full_lines: list[bytes] = path.read_bytes().splitlines(keepends=True)
    assert len(full_lines) == 1000  # noqa: PLR2004

    for count, data in snapshots.items():
        assert data.splitlines(keepends=True) == full_lines[:count]

        # The next append was halfway written when the process died
        killed: Path = tmp_path / f"killed-{count}.jsonl"
        torn: bytes = full_lines[count][: len(full_lines[count]) // 2] if count < len(full_lines) else b""
        killed.write_bytes(data + torn)

        with EventLog(killed, "room-1") as log:
            assert killed.read_bytes() == data
            assert log.next_sequence == count
        assert [e.sequence for e in read_event_log(killed)] == list(range(count))
        assert all(json.loads(line)["seq"] == n for n, line in enumerate(data.splitlines()))


def test_corrupt_line_is_refused(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test that a log with a garbled complete line is reported by line number and left alone."""
    path: Path = tmp_path / "events.jsonl"
    with EventLog(path, "room-1") as log:
        log.append_event(ENTERED)
        log.append_event(SEATED)
    first, second = path.read_bytes().splitlines(keepends=True)
    path.write_bytes(first + b"not json\n" + second)
    before: bytes = path.read_bytes()

    opened: list[int] = []
    closed: list[int] = []
    real_open, real_close = os.open, os.close

    def tracking_open(*args: object, **kwargs: object) -> int:
        fd: int = real_open(*args, **kwargs)  # type: ignore[arg-type]
        opened.append(fd)
        return fd

    def tracking_close(fd: int) -> None:
        closed.append(fd)
        real_close(fd)

    with monkeypatch.context() as m:
        m.setattr(os, "open", tracking_open)
        m.setattr(os, "close", tracking_close)
        with pytest.raises(EventLogCorruptError, match="line 2"):
            EventLog(path, "room-1")

    # Check that the descriptor was closed and nothing was cut off
    assert opened
    assert closed == opened
    assert path.read_bytes() == before

    with pytest.raises(EventLogCorruptError, match="line 2"):
        read_event_log(path)


def test_long_sitting_ends_with_an_alert_line(tmp_path: Path) -> None:
    """Test that sitting still for eleven minutes leaves an alert as the last logged line."""
    path: Path = tmp_path / "events.jsonl"
    trace = synthesize(builtin_scenario(BuiltinScenario.EXP2), NoiseModel.silent(0))

    with EventLog(path, "room-1") as log:
        for event in run_trace(trace):
            log.append_event(event)

    last_line = path.read_text(encoding="utf-8").splitlines()[-1]
    assert json.loads(last_line)["to"] == "ALERT"
