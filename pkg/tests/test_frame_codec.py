import pytest

from pir_lidar_watch.exceptions import FrameFieldError
from pir_lidar_watch.frame_codec import FRAME_LENGTH, FrameDecoder, LidarFrame, decode_stream, encode_frame
from pir_lidar_watch.prng import Pcg32

SEATED_FRAME: bytes = bytes.fromhex("5959 4100 DC05 2001 F5")
WRONG_CHECK_BYTE: bytes = bytes.fromhex("5959 4100 DC05 2001 F1")


def test_decode_seated_frame() -> None:
    """Test that a frame read while seated decodes to 65 cm."""
    frames, stats = decode_stream(SEATED_FRAME)

    assert frames == [LidarFrame(distance_cm=65, strength=1500, temp_raw=288, checksum_ok=True)]
    assert stats.frames_ok == 1
    assert stats.frames_bad_checksum == 0
    assert stats.bytes_skipped_resync == 0

    # 288 / 8 - 256
    assert frames[0].temperature_c == -220.0  # noqa: PLR2004


def test_decode_wrong_check_byte() -> None:
    """Test that a frame with a wrong check byte is still returned, flagged as bad."""
    frames, stats = decode_stream(WRONG_CHECK_BYTE + SEATED_FRAME)

    assert len(frames) == 2  # noqa: PLR2004
    assert frames[0].checksum_ok is False
    assert frames[0].distance_cm == 65  # noqa: PLR2004
    assert frames[1].checksum_ok
    assert stats.frames_bad_checksum == 1
    assert stats.bytes_skipped_resync == 0


def test_trailing_bad_frame_stays_pending() -> None:
    """Test that a bad frame with nothing after it is held back instead of guessed at."""
    decoder = FrameDecoder()
    frames = decoder.feed(SEATED_FRAME + WRONG_CHECK_BYTE) + decoder.finish()

    assert frames == [LidarFrame(distance_cm=65, strength=1500, temp_raw=288, checksum_ok=True)]
    assert decoder.pending == FRAME_LENGTH
    assert decoder.stats.frames_bad_checksum == 0

    # One more header byte still doesn't decide it
    decoder.feed(b"\x59")
    assert decoder.pending == FRAME_LENGTH + 1

    # Anything else after it shows it was a false header
    decoder.feed(b"\x00")
    assert decoder.stats.frames_bad_checksum == 0
    assert decoder.stats.bytes_skipped_resync == FRAME_LENGTH + 2 - 1


def test_encode_examples() -> None:
    """Test the byte layout of encoded frames."""
    assert encode_frame(0, 0, 0) == bytes.fromhex("5959 0000 0000 0000 B2")
    assert encode_frame(65, 1500, 288) == SEATED_FRAME


@pytest.mark.parametrize(("distance", "strength", "temp"), [(-1, 0, 0), (0, 65536, 0), (0, 0, 70000)])
def test_encode_rejects_fields_outside_16_bits(distance: int, strength: int, temp: int) -> None:
    """Test that fields that don't fit are refused."""
    with pytest.raises(FrameFieldError):
        encode_frame(distance, strength, temp)


def test_encoded_stream_decodes_back() -> None:
    """Test that a long stream of random frames decodes to the same fields."""
    rng = Pcg32(7)
    fields: list[tuple[int, int, int]] = [
        (rng.bounded(0, 0xFFFF), rng.bounded(0, 0xFFFF), rng.bounded(0, 0xFFFF)) for _ in range(10_000)
    ]
    stream: bytes = b"".join(encode_frame(*f) for f in fields)

    frames, stats = decode_stream(stream)

    assert [(f.distance_cm, f.strength, f.temp_raw) for f in frames] == fields
    assert all(f.checksum_ok for f in frames)
    assert stats.frames_ok == len(fields)
    assert stats.bytes_skipped_resync == 0


def test_decode_never_raises_on_garbage() -> None:
    """Test that random bytes only ever become frames, skipped bytes or a trailing partial frame."""
    rng = Pcg32(11)
    for _ in range(10_000):
        data = bytes(rng.bounded(0, 255) for _ in range(rng.bounded(0, 200)))
        # Bias towards header bytes so the frame path gets exercised too
        data = data.replace(b"\x00", b"\x59")

        decoder = FrameDecoder()
        frames = decoder.feed(data) + decoder.finish()

        stats = decoder.stats
        assert stats.frames_ok + stats.frames_bad_checksum == len(frames)
        accounted: int = len(frames) * FRAME_LENGTH + stats.bytes_skipped_resync + decoder.pending
        assert accounted == len(data)


def test_feeding_in_pieces_gives_the_same_frames() -> None:
    """Test that splitting the stream at any point doesn't change the result."""
    stream: bytes = b"\x00\x59" + SEATED_FRAME + encode_frame(200, 40, 300) + b"\x59\x59\x10"
    expected, _ = decode_stream(stream)

    for split in range(len(stream) + 1):
        decoder = FrameDecoder()
        frames = decoder.feed(stream[:split]) + decoder.feed(stream[split:]) + decoder.finish()
        assert frames == expected, f"split at {split}"


def test_more_bytes_never_change_decoded_frames() -> None:
    """Test that a capture cut short decodes to a prefix of what the whole capture decodes to."""
    # A trailing bad-looking frame followed by bytes that make it a false header
    frames, _ = decode_stream(b"\x59\x59" + bytes(7))
    longer, stats = decode_stream(b"\x59\x59" + bytes(9))
    assert frames == longer == []
    assert stats.bytes_skipped_resync == 10  # noqa: PLR2004

    rng = Pcg32(5)
    for _ in range(50):
        pieces: list[bytes] = []
        for _ in range(rng.bounded(1, 8)):
            frame = bytearray(encode_frame(rng.bounded(0, 0xFFFF), rng.bounded(0, 0xFFFF), rng.bounded(0, 0xFFFF)))
            if rng.chance(0.3):
                frame[-1] ^= rng.bounded(1, 255)
            pieces.append(bytes(frame))
            if rng.chance(0.3):
                pieces.append(bytes(rng.choice([0x00, 0x59]) for _ in range(rng.bounded(1, 4))))
        stream: bytes = b"".join(pieces)
        whole, _ = decode_stream(stream)

        for cut in range(len(stream) + 1):
            partial, _ = decode_stream(stream[:cut])
            assert whole[: len(partial)] == partial, f"cut at {cut} of {stream.hex()}"


def test_garbage_prefix_is_skipped() -> None:
    """Test that bytes before the first header are counted as skipped."""
    frames, stats = decode_stream(b"\x01\x02\x59\x03" + SEATED_FRAME)

    assert len(frames) == 1
    assert frames[0].checksum_ok
    assert stats.bytes_skipped_resync == 4  # noqa: PLR2004


def test_false_header_inside_payload_is_skipped() -> None:
    """Test that a 0x59 0x59 pair that isn't a frame doesn't swallow the real frame after it."""
    frames, stats = decode_stream(b"\x59\x59\x01\x02" + SEATED_FRAME)

    assert frames == [LidarFrame(distance_cm=65, strength=1500, temp_raw=288, checksum_ok=True)]
    assert stats.bytes_skipped_resync == 4  # noqa: PLR2004
    assert stats.frames_bad_checksum == 0


def test_trailing_partial_frame_is_pending() -> None:
    """Test that an incomplete frame at the end of a capture is left undecoded."""
    decoder = FrameDecoder()
    frames = decoder.feed(SEATED_FRAME + SEATED_FRAME[:5]) + decoder.finish()

    assert len(frames) == 1
    assert decoder.pending == 5  # noqa: PLR2004


@pytest.mark.parametrize("seed", [3, 4])
@pytest.mark.parametrize("header_heavy", [False, True])
def test_resync_after_single_byte_corruption(seed: int, *, header_heavy: bool) -> None:
    """Test that any single corrupted byte costs at most one frame length of skipped bytes."""
    rng = Pcg32(seed)
    frames_in: list[bytes] = []
    for _ in range(100):
        distance: int = 0x5959 if header_heavy and rng.chance(0.5) else rng.bounded(0, 0xFFFF)
        frames_in.append(encode_frame(distance, rng.bounded(0, 0xFFFF), rng.bounded(0, 0xFFFF)))
    stream: bytes = b"".join(frames_in)
    # A run of 0x5959 distances after the damage can be read as a chain of misaligned bad frames
    most_lost: int = 20 if header_heavy else 2

    for position in range(len(stream)):
        for mask in (0x01, 0xFF, stream[position] ^ 0x59 or 0x80):
            corrupted = bytearray(stream)
            corrupted[position] ^= mask

            _, stats = decode_stream(corrupted)

            assert stats.bytes_skipped_resync <= FRAME_LENGTH, f"byte {position} ^ {mask:#x}"
            accounted: int = (stats.frames_ok + stats.frames_bad_checksum) * FRAME_LENGTH + stats.bytes_skipped_resync
            assert accounted <= len(corrupted)
            assert stats.frames_ok >= len(frames_in) - most_lost, f"byte {position} ^ {mask:#x}"
