"""Bit-exact framed codec for the device-to-host byte stream.

Frame layout: SYNC (0xA5), frame type, payload length, payload, then a
checksum equal to the XOR of every byte after the SYNC and before the
checksum.  Multi-byte payload fields are little-endian.  The decoder is
incremental: it accepts arbitrary chunking, never raises on garbage input,
and after an error discards up to the next SYNC candidate and resumes, so a
single corrupted byte costs at most one following frame.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

SYNC = 0xA5
ADC_MAX = 1023
TS_MAX = 0xFFFF_FFFF
DURATION_MAX = 0xFFFF


class FrameType(enum.IntEnum):
    SENSOR_DATA = 0x01
    VIBRATE = 0x02
    ACK = 0x03
    HEARTBEAT = 0x04


_PAYLOAD_LEN = {
    FrameType.SENSOR_DATA: 6,  # u32 ts_ms + u16 sensor value
    FrameType.VIBRATE: 2,      # u16 duration_ms
    FrameType.ACK: 1,          # acked frame type
    FrameType.HEARTBEAT: 0,
}


@dataclass(frozen=True)
class SensorData:
    ts_ms: int
    value: int


@dataclass(frozen=True)
class Vibrate:
    duration_ms: int


@dataclass(frozen=True)
class Ack:
    acked_type: int


@dataclass(frozen=True)
class Heartbeat:
    pass


Frame = Union[SensorData, Vibrate, Ack, Heartbeat]


class EncodeError(ValueError):
    """Frame fields violate their invariants."""


class DecodeErrorKind(str, enum.Enum):
    CHECKSUM_MISMATCH = "ChecksumMismatch"
    UNKNOWN_TYPE = "UnknownType"
    MALFORMED = "Malformed"          # length/field inconsistent with the frame type
    TRUNCATED_AT_END = "TruncatedAtEnd"


@dataclass(frozen=True)
class DecodeError:
    kind: DecodeErrorKind
    detail: str


def _xor(data: bytes) -> int:
    ck = 0
    for b in data:
        ck ^= b
    return ck


def encode_frame(frame: Frame) -> bytes:
    if isinstance(frame, SensorData):
        if not 0 <= frame.value <= ADC_MAX:
            raise EncodeError(f"sensor value {frame.value} outside [0, {ADC_MAX}]")
        if not 0 <= frame.ts_ms <= TS_MAX:
            raise EncodeError(f"timestamp {frame.ts_ms} outside u32 range")
        ftype, payload = FrameType.SENSOR_DATA, struct.pack("<IH", frame.ts_ms, frame.value)
    elif isinstance(frame, Vibrate):
        if not 0 <= frame.duration_ms <= DURATION_MAX:
            raise EncodeError(f"duration {frame.duration_ms} outside u16 range")
        ftype, payload = FrameType.VIBRATE, struct.pack("<H", frame.duration_ms)
    elif isinstance(frame, Ack):
        if not 0 <= frame.acked_type <= 0xFF:
            raise EncodeError(f"acked type {frame.acked_type} outside u8 range")
        ftype, payload = FrameType.ACK, bytes([frame.acked_type])
    elif isinstance(frame, Heartbeat):
        ftype, payload = FrameType.HEARTBEAT, b""
    else:
        raise EncodeError(f"not a frame: {frame!r}")
    body = bytes([ftype, len(payload)]) + payload
    return bytes([SYNC]) + body + bytes([_xor(body)])


def _parse_payload(ftype: FrameType, payload: bytes) -> Frame | DecodeError:
    if ftype is FrameType.SENSOR_DATA:
        ts_ms, value = struct.unpack("<IH", payload)
        if value > ADC_MAX:
            return DecodeError(
                DecodeErrorKind.MALFORMED, f"sensor value {value} exceeds {ADC_MAX}"
            )
        return SensorData(ts_ms=ts_ms, value=value)
    if ftype is FrameType.VIBRATE:
        return Vibrate(duration_ms=struct.unpack("<H", payload)[0])
    if ftype is FrameType.ACK:
        return Ack(acked_type=payload[0])
    return Heartbeat()


class StreamDecoder:
    """Incremental frame parser over an arbitrary byte stream.

    ``feed`` may be called with any chunking of the stream; results are
    identical for identical concatenated input.  ``finish`` flushes pending
    bytes at end of stream, salvaging any complete frames a truncated or
    corrupt prefix was hiding.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> tuple[list[Frame], list[DecodeError]]:
        self._buf.extend(data)
        frames: list[Frame] = []
        errors: list[DecodeError] = []
        while True:
            status = self._try_parse(frames, errors)
            if status == "wait":
                return frames, errors

    def finish(self) -> tuple[list[Frame], list[DecodeError]]:
        """Flush at end of stream; a pending partial frame is a truncation."""
        frames: list[Frame] = []
        errors: list[DecodeError] = []
        while True:
            status = self._try_parse(frames, errors)
            if status == "wait":
                if not self._buf:
                    return frames, errors
                # We were mid-frame with no more bytes coming: report it,
                # drop the sync candidate, and rescan what it swallowed.
                errors.append(
                    DecodeError(
                        DecodeErrorKind.TRUNCATED_AT_END,
                        f"{len(self._buf)} byte partial frame at end of stream",
                    )
                )
                self._resync()

    def _resync(self) -> None:
        """Drop the failed SYNC candidate and skip to the next one."""
        nxt = self._buf.find(SYNC, 1)
        del self._buf[: nxt if nxt >= 0 else len(self._buf)]

    def _try_parse(self, frames: list[Frame], errors: list[DecodeError]) -> str:
        """Attempt one frame at the buffer head; returns 'again' or 'wait'."""
        start = self._buf.find(SYNC)
        if start < 0:
            self._buf.clear()  # inter-frame noise, silently dropped
            return "wait"
        if start > 0:
            del self._buf[:start]
        if len(self._buf) < 3:
            return "wait"
        type_byte, length = self._buf[1], self._buf[2]
        try:
            ftype = FrameType(type_byte)
        except ValueError:
            errors.append(
                DecodeError(DecodeErrorKind.UNKNOWN_TYPE, f"frame type 0x{type_byte:02X}")
            )
            self._resync()
            return "again"
        expected = _PAYLOAD_LEN[ftype]
        if length != expected:
            errors.append(
                DecodeError(
                    DecodeErrorKind.MALFORMED,
                    f"{ftype.name} declares {length} payload bytes, expected {expected}",
                )
            )
            self._resync()
            return "again"
        total = 3 + length + 1
        if len(self._buf) < total:
            return "wait"
        body = bytes(self._buf[1 : total - 1])
        checksum = self._buf[total - 1]
        if _xor(body) != checksum:
            errors.append(
                DecodeError(
                    DecodeErrorKind.CHECKSUM_MISMATCH,
                    f"{ftype.name}: computed 0x{_xor(body):02X}, frame carries 0x{checksum:02X}",
                )
            )
            self._resync()
            return "again"
        result = _parse_payload(ftype, body[2:])
        if isinstance(result, DecodeError):
            # Framing was consistent (checksum valid), so skip the whole frame.
            errors.append(result)
            del self._buf[:total]
            return "again"
        frames.append(result)
        del self._buf[:total]
        return "again"


def decode_bytes(data: bytes) -> tuple[list[Frame], list[DecodeError]]:
    """Decode a complete captured byte sequence in one call."""
    decoder = StreamDecoder()
    frames, errors = decoder.feed(data)
    tail_frames, tail_errors = decoder.finish()
    return frames + tail_frames, errors + tail_errors
