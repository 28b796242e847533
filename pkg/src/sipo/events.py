"""Typed session events and the line-record schema shared by all logs.

Every log line is one JSON object with a fixed leading field order
(ts_ms, kind, ...); the same shape is used for the monitor's session log,
the simulated device's actuation log, and the live stream records, so one
parser serves them all.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Any


class EventKind(str, enum.Enum):
    ZONE_EXIT = "ZoneExit"
    ZONE_REENTER = "ZoneReenter"
    VIBRATE_SENT = "VibrateSent"
    SIT_LIMIT_REACHED = "SitLimitReached"
    SESSION_START = "SessionStart"
    SESSION_STOP = "SessionStop"
    DEVICE_LOST = "DeviceLost"
    DEVICE_RESTORED = "DeviceRestored"


# Kinds the posture engine itself emits; replay compares exactly these.
ENGINE_EVENT_KINDS = frozenset(
    {
        EventKind.ZONE_EXIT,
        EventKind.ZONE_REENTER,
        EventKind.VIBRATE_SENT,
        EventKind.SIT_LIMIT_REACHED,
        EventKind.SESSION_START,
        EventKind.SESSION_STOP,
    }
)

# Non-event record kinds appearing in logs.
KIND_SAMPLE = "Sample"
KIND_META = "Meta"
KIND_CONFIG_CHANGE = "ConfigChange"
KIND_VIBRATE_ACTUATED = "VibrateActuated"


@dataclass(frozen=True)
class SessionEvent:
    """One timestamped pipeline happening (zone exit, vibrate sent, ...)."""

    ts_ms: int
    kind: EventKind
    angle_deg: float | None = None
    session_id: str | None = None

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {"ts_ms": self.ts_ms, "kind": self.kind.value}
        if self.angle_deg is not None:
            record["angle_deg"] = self.angle_deg
        record["session_id"] = self.session_id
        return record

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "SessionEvent":
        return cls(
            ts_ms=int(record["ts_ms"]),
            kind=EventKind(record["kind"]),
            angle_deg=record.get("angle_deg"),
            session_id=record.get("session_id"),
        )


def encode_record(record: dict[str, Any]) -> str:
    """One self-contained log line, no trailing newline."""
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def decode_record(line: str) -> dict[str, Any]:
    record = json.loads(line)
    if not isinstance(record, dict) or "kind" not in record:
        raise ValueError("log record must be an object with a 'kind' field")
    return record
