"""Append-only JSON lines log of detection events.

Each line is one AlertEnvelope in its wire form. A line is written with a single write
on an O_APPEND descriptor and fsynced before append_event returns, so readers only ever
see whole lines, plus at most one torn line at the end after a crash.
"""

from __future__ import annotations

import json
import os
from typing import TYPE_CHECKING

from loguru import logger

from pir_lidar_watch._dataclasses import AlertEnvelope, DetectionEvent
from pir_lidar_watch.exceptions import EventLogCorruptError, EventLogWriteError

if TYPE_CHECKING:
    from collections.abc import Iterator
    from pathlib import Path
    from types import TracebackType


def _encode(envelope: AlertEnvelope) -> bytes:
    return (json.dumps(envelope.to_dict(), separators=(",", ":")) + "\n").encode("utf-8")


def _split_complete_lines(data: bytes) -> tuple[list[bytes], bytes]:
    """Split into complete lines and whatever follows the last newline."""
    *lines, tail = data.split(b"\n")
    return lines, tail


def _parse_lines(path: Path, lines: list[bytes]) -> Iterator[AlertEnvelope]:
    """Parse complete lines, blank ones are skipped.

    Raises:
        EventLogCorruptError: A line is not an envelope written by EventLog.
    """
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            envelope = AlertEnvelope.from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as e:
            raise EventLogCorruptError(path, number, str(e)) from e
        yield envelope


def read_event_log(path: Path) -> list[AlertEnvelope]:
    """Read every complete line of an event log.

    A torn last line (a crash in the middle of an append) is ignored.

    Args:
        path: The log file.

    Raises:
        EventLogCorruptError: A complete line is not an envelope. The log was not written by EventLog.

    Returns:
        The envelopes in append order.
    """
    lines, tail = _split_complete_lines(path.read_bytes())
    if tail:
        logger.warning("Ignoring torn last line of {} ({} bytes)", path, len(tail))
    return list(_parse_lines(path, lines))


class EventLog:
    """Durable, append-only event log for one source.

    Opening an existing log cuts off a torn last line and continues its sequence numbers.
    """

    def __init__(self: EventLog, path: Path, source_id: str) -> None:
        """Open or create the log.

        Raises:
            EventLogCorruptError: The existing file has a complete line that is not an envelope.
                The file is left untouched.
        """
        self.path: Path = path
        self.source_id: str = source_id
        self.next_sequence: int = 0

        path.parent.mkdir(parents=True, exist_ok=True)
        self._fd: int = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            self._repair()
        except Exception:
            self.close()
            raise

    def _repair(self: EventLog) -> None:
        data: bytes = self.path.read_bytes()
        lines, tail = _split_complete_lines(data)

        sequences: list[int] = [
            envelope.sequence for envelope in _parse_lines(self.path, lines) if envelope.source_id == self.source_id
        ]

        if tail:
            logger.warning("Cutting torn last line off {} ({} bytes)", self.path, len(tail))
            os.ftruncate(self._fd, len(data) - len(tail))
            os.fsync(self._fd)

        if sequences:
            self.next_sequence = max(sequences) + 1
            logger.debug("Resuming {} at seq {}", self.path, self.next_sequence)

    def append_event(self: EventLog, event: DetectionEvent) -> AlertEnvelope:
        """Append one event and wait until it is on disk.

        Args:
            event: The detection event.

        Raises:
            EventLogWriteError: The write failed or was short. The partial line was removed,
                the sequence number was not used and the append can be retried.

        Returns:
            The envelope that was written, with its sequence number.
        """
        envelope = AlertEnvelope(
            event=event,
            source_id=self.source_id,
            emitted_at=event.t_ms,
            sequence=self.next_sequence,
        )
        data: bytes = _encode(envelope)
        size_before: int = os.fstat(self._fd).st_size

        try:
            written: int = os.write(self._fd, data)
            if written != len(data):
                msg: str = f"Short write to {self.path}: {written} of {len(data)} bytes"
                raise EventLogWriteError(msg)
            os.fsync(self._fd)
        except OSError as e:
            self._truncate_to(size_before)
            logger.error("Could not append seq {} to {}: {}", envelope.sequence, self.path, e)
            if isinstance(e, EventLogWriteError):
                raise
            msg = f"Could not append to {self.path}: {e}"
            raise EventLogWriteError(msg) from e

        self.next_sequence += 1
        return envelope

    def _truncate_to(self: EventLog, size: int) -> None:
        try:
            os.ftruncate(self._fd, size)
            os.fsync(self._fd)
        except OSError as e:
            # Whatever is left is a torn line, the next open cuts it off
            logger.error("Could not remove partial line from {}: {}", self.path, e)

    def close(self: EventLog) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self: EventLog) -> EventLog:
        return self

    def __exit__(
        self: EventLog,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()
