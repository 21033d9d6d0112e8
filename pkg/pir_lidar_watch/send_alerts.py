"""Send detection events to a caregiver endpoint.

Every envelope goes out as one JSON object followed by a newline over a TCP connection.
Delivery is at least once: failed sends are retried with exponential backoff, so a
receiver can see the same (source_id, seq) twice and should run dedup_envelopes.
"""

from __future__ import annotations

import contextlib
import json
import socket
import threading
import time
from collections import deque
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from typing import Protocol

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from pir_lidar_watch._dataclasses import AlertEnvelope
from pir_lidar_watch.exceptions import DeliveryError


class Connection(Protocol):
    def sendall(self: Connection, data: bytes, /) -> None: ...

    def close(self: Connection) -> None: ...


Connector = Callable[[tuple[str, int], float], Connection]


class EmitterConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Envelopes waiting for delivery, alerts are kept over everything else when it fills up
    buffer_size: int = Field(default=256, ge=1)

    base_delay_s: float = Field(default=0.5, gt=0)
    max_delay_s: float = Field(default=30.0, gt=0)
    max_attempts: int = Field(default=8, ge=1)
    connect_timeout_s: float = Field(default=5.0, gt=0)


@dataclass(frozen=True, slots=True)
class DeliveryResult:
    delivered: bool
    attempts: int
    sequence: int

    def raise_for_failure(self: DeliveryResult) -> None:
        """Raise DeliveryError if the envelope was not delivered."""
        if not self.delivered:
            msg: str = f"seq {self.sequence} not delivered after {self.attempts} attempts"
            raise DeliveryError(msg)


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    """Split HOST:PORT.

    Raises:
        ValueError: The endpoint isn't HOST:PORT with a port in 1-65535.
    """
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:  # noqa: PLR2004
        msg: str = f"Expected HOST:PORT, got {endpoint!r}"
        raise ValueError(msg)
    return host.strip("[]"), int(port)


def get_backoff_delay(attempt: int, config: EmitterConfig) -> float:
    """Get how long to wait after the given failed attempt (0 based).

    base_delay_s * 2^attempt, capped at max_delay_s.
    """
    return min(config.base_delay_s * 2**attempt, config.max_delay_s)


def encode_envelope(envelope: AlertEnvelope) -> bytes:
    return (json.dumps(envelope.to_dict(), separators=(",", ":")) + "\n").encode("utf-8")


def emit_alert(
    envelope: AlertEnvelope,
    endpoint: tuple[str, int],
    config: EmitterConfig | None = None,
    connect: Connector = socket.create_connection,
    sleep: Callable[[float], None] = time.sleep,
) -> DeliveryResult:
    """Deliver one envelope, retrying with backoff.

    Args:
        envelope: What to send.
        endpoint: (host, port) of the receiver.
        config: Retry settings, defaults if None.
        connect: Opens a connection, socket.create_connection unless testing.
        sleep: Waits between attempts, time.sleep unless testing.

    Returns:
        Whether the envelope was delivered and how many attempts it took.
    """
    config = config or EmitterConfig()
    data: bytes = encode_envelope(envelope)

    for attempt in range(config.max_attempts):
        try:
            with contextlib.closing(connect(endpoint, config.connect_timeout_s)) as connection:
                connection.sendall(data)
        except OSError as e:
            logger.warning("Attempt {} for seq {} to {}:{} failed: {}", attempt + 1, envelope.sequence, *endpoint, e)
            if attempt + 1 < config.max_attempts:
                sleep(get_backoff_delay(attempt, config))
            continue

        logger.debug("Delivered seq {} to {}:{} on attempt {}", envelope.sequence, *endpoint, attempt + 1)
        return DeliveryResult(delivered=True, attempts=attempt + 1, sequence=envelope.sequence)

    logger.error("Giving up on seq {} after {} attempts", envelope.sequence, config.max_attempts)
    return DeliveryResult(delivered=False, attempts=config.max_attempts, sequence=envelope.sequence)


class AlertBuffer:
    """Ordered, bounded buffer of envelopes waiting for delivery.

    When full, the oldest envelope that isn't an alert is dropped to make room. Only a
    buffer holding nothing but alerts drops its oldest alert.
    """

    def __init__(self: AlertBuffer, capacity: int) -> None:
        self.capacity: int = capacity
        self._items: deque[AlertEnvelope] = deque()
        self.dropped: int = 0

    def __len__(self: AlertBuffer) -> int:
        return len(self._items)

    def __iter__(self: AlertBuffer) -> Iterator[AlertEnvelope]:
        return iter(self._items)

    def push(self: AlertBuffer, envelope: AlertEnvelope) -> AlertEnvelope | None:
        """Add an envelope, returns the envelope that was dropped to make room, if any."""
        victim: AlertEnvelope | None = self._evict() if len(self._items) >= self.capacity else None
        self._items.append(envelope)
        return victim

    def pop(self: AlertBuffer) -> AlertEnvelope:
        return self._items.popleft()

    def put_back(self: AlertBuffer, envelope: AlertEnvelope) -> AlertEnvelope | None:
        """Return an envelope that failed delivery to the front, keeping the order.

        Envelopes submitted while it was in flight may have filled the buffer, then the
        same drop policy as push applies and the returned envelope can be this one.
        """
        self._items.appendleft(envelope)
        return self._evict() if len(self._items) > self.capacity else None

    def _evict(self: AlertBuffer) -> AlertEnvelope:
        victim: AlertEnvelope = next((e for e in self._items if not e.is_alert), self._items[0])
        self._items.remove(victim)
        self.dropped += 1
        return victim


class AlertEmitter:
    """Deliver envelopes from a background thread so detection never waits for the network.

    submit() only takes a lock and appends to the buffer. An envelope leaves the buffer
    for good only after it was sent.
    """

    def __init__(
        self: AlertEmitter,
        endpoint: tuple[str, int],
        config: EmitterConfig | None = None,
        connect: Connector = socket.create_connection,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.config: EmitterConfig = config or EmitterConfig()
        self.delivered: list[int] = []

        self._connect = connect
        self._sleep = sleep
        self._buffer = AlertBuffer(self.config.buffer_size)
        self._in_flight: AlertEnvelope | None = None
        self._cond = threading.Condition()
        self._stopping: bool = False
        self._abandon: bool = False
        self._thread = threading.Thread(target=self._run, name="alert-emitter", daemon=True)
        self._thread.start()

    @property
    def pending(self: AlertEmitter) -> int:
        with self._cond:
            return len(self._buffer) + (self._in_flight is not None)

    def submit(self: AlertEmitter, envelope: AlertEnvelope) -> None:
        with self._cond:
            dropped = self._buffer.push(envelope)
            self._cond.notify_all()
        if dropped is not None:
            logger.error("Alert buffer full, dropped seq {} ({})", dropped.sequence, dropped.event.to_state)

    def _run(self: AlertEmitter) -> None:
        while True:
            with self._cond:
                while not len(self._buffer) and not self._stopping:
                    self._cond.wait()
                if self._abandon or not len(self._buffer):
                    return
                envelope = self._buffer.pop()
                self._in_flight = envelope

            result = emit_alert(envelope, self.endpoint, self.config, self._connect, self._sleep)

            dropped: AlertEnvelope | None = None
            with self._cond:
                self._in_flight = None
                if result.delivered:
                    self.delivered.append(envelope.sequence)
                else:
                    dropped = self._buffer.put_back(envelope)
                self._cond.notify_all()
                if dropped is not None:
                    logger.error("Alert buffer full, dropped seq {} ({})", dropped.sequence, dropped.event.to_state)
                if not result.delivered and not self._abandon:
                    self._cond.wait(timeout=self.config.max_delay_s)

    def close(self: AlertEmitter, timeout: float | None = None) -> None:
        """Wait for the buffer to drain, then stop the worker.

        Args:
            timeout: Seconds to wait for delivery, forever if None.

        Raises:
            DeliveryError: Envelopes were still undelivered when the timeout ran out.
        """
        deadline: float | None = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
            while len(self._buffer) or self._in_flight is not None:
                remaining: float | None = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    break
                self._cond.wait(timeout=remaining)

            undelivered: int = len(self._buffer) + (self._in_flight is not None)
            self._abandon = True
            self._cond.notify_all()

        self._thread.join(timeout=1.0)
        if undelivered:
            msg: str = f"{undelivered} envelope(s) not delivered to {self.endpoint[0]}:{self.endpoint[1]}"
            raise DeliveryError(msg)


def dedup_envelopes(envelopes: Iterable[AlertEnvelope]) -> list[AlertEnvelope]:
    """Drop repeated deliveries, keeping the first copy of every (source_id, seq)."""
    seen: set[tuple[str, int]] = set()
    unique: list[AlertEnvelope] = []
    for envelope in envelopes:
        key = (envelope.source_id, envelope.sequence)
        if key not in seen:
            seen.add(key)
            unique.append(envelope)
    return unique
