"""TF-Luna serial data frames.

Frame layout (9 bytes, little-endian 16-bit fields):

    0x59 0x59 dist_lo dist_hi strength_lo strength_hi temp_lo temp_hi checksum

The checksum is the low byte of the sum of the first 8 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from loguru import logger

from pir_lidar_watch.exceptions import FrameFieldError

HEADER_BYTE: int = 0x59
HEADER_PAIR: bytes = bytes([HEADER_BYTE, HEADER_BYTE])
FRAME_LENGTH: int = 9
_PAYLOAD = struct.Struct("<HHH")
_MAX_FIELD: int = 0xFFFF


@dataclass(frozen=True, slots=True)
class LidarFrame:
    distance_cm: int
    strength: int
    temp_raw: int
    checksum_ok: bool

    @property
    def temperature_c(self: LidarFrame) -> float:
        """Chip temperature, the sensor reports it in 1/8 degrees offset by 256."""
        return self.temp_raw / 8 - 256


@dataclass(slots=True)
class DecodeStats:
    frames_ok: int = 0
    frames_bad_checksum: int = 0
    bytes_skipped_resync: int = 0


def checksum(data: bytes | bytearray) -> int:
    return sum(data[: FRAME_LENGTH - 1]) & 0xFF


def encode_frame(distance_cm: int, strength: int, temp_raw: int) -> bytes:
    """Encode one data frame.

    Raises:
        FrameFieldError: A field is negative or doesn't fit in 16 bits.

    Returns:
        The 9 frame bytes.
    """
    for name, value in (("distance_cm", distance_cm), ("strength", strength), ("temp_raw", temp_raw)):
        if not 0 <= value <= _MAX_FIELD:
            msg: str = f"{name}={value} does not fit in an unsigned 16-bit field"
            raise FrameFieldError(msg)

    body = HEADER_PAIR + _PAYLOAD.pack(distance_cm, strength, temp_raw)
    return body + bytes([checksum(body)])


class FrameDecoder:
    """Incremental decoder, feed it bytes as they come off the wire.

    Frames are emitted as soon as they can be decided, so feeding more bytes never
    changes frames that were already returned. A header whose checksum fails is
    reported as a bad frame when another header follows it; otherwise it was a
    false header inside payload data and the decoder slides forward one byte.
    """

    def __init__(self: FrameDecoder) -> None:
        self.stats = DecodeStats()
        self._buffer = bytearray()

    @property
    def pending(self: FrameDecoder) -> int:
        """Bytes held back waiting for more input."""
        return len(self._buffer)

    def feed(self: FrameDecoder, data: bytes | bytearray) -> list[LidarFrame]:
        self._buffer.extend(data)
        return self._drain()

    def finish(self: FrameDecoder) -> list[LidarFrame]:
        """Decide whatever can still be decided at end of stream.

        Bytes that don't make up a whole frame stay in `pending`, and so does a trailing
        header with a failing checksum that nothing follows: more input could still show
        it to be a false header, so it is never reported.
        """
        return self._drain()

    def _skip(self: FrameDecoder) -> None:
        del self._buffer[0]
        self.stats.bytes_skipped_resync += 1

    def _drain(self: FrameDecoder) -> list[LidarFrame]:
        frames: list[LidarFrame] = []
        buf = self._buffer

        while len(buf) >= 2:  # noqa: PLR2004
            if buf[0] != HEADER_BYTE or buf[1] != HEADER_BYTE:
                self._skip()
                continue

            if len(buf) < FRAME_LENGTH:
                break

            ok: bool = checksum(buf) == buf[FRAME_LENGTH - 1]
            if not ok:
                # A damaged frame is told from a false header by the two bytes after it
                lookahead = buf[FRAME_LENGTH : FRAME_LENGTH + 2]
                if lookahead != HEADER_PAIR[: len(lookahead)]:
                    self._skip()
                    continue
                if len(lookahead) < 2:  # noqa: PLR2004
                    break

            distance_cm, strength, temp_raw = _PAYLOAD.unpack_from(buf, 2)
            frames.append(LidarFrame(distance_cm, strength, temp_raw, checksum_ok=ok))
            if ok:
                self.stats.frames_ok += 1
            else:
                self.stats.frames_bad_checksum += 1
                logger.debug("Frame with bad checksum, distance field {}cm", distance_cm)
            del buf[:FRAME_LENGTH]

        return frames


def decode_stream(data: bytes | bytearray) -> tuple[list[LidarFrame], DecodeStats]:
    """Decode a complete capture in one pass. Malformed input only ever becomes skipped bytes.

    Args:
        data: Raw bytes as they came off the UART.

    Returns:
        The frames in stream order and the decoder statistics.
    """
    decoder = FrameDecoder()
    frames = decoder.feed(data)
    frames.extend(decoder.finish())

    if decoder.stats.bytes_skipped_resync:
        logger.debug("Skipped {} bytes while resynchronizing", decoder.stats.bytes_skipped_resync)
    if decoder.pending:
        logger.warning("{} trailing bytes don't make up a whole frame", decoder.pending)

    return frames, decoder.stats
