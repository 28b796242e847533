"""Deterministic re-execution of a session log through the posture engine.

The monitor logs everything the engine consumed (config, session controls,
samples) alongside everything it emitted.  Replay rebuilds a fresh engine
from the logged config, feeds it the same inputs, and compares the emitted
event stream with the logged one; any difference means the live service
added nondeterminism.  Link-state records (DeviceLost/DeviceRestored) are
service-level and excluded from the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import events as ev
from .engine import MonitorConfig, PostureEngine, Sample
from .eventlog import read_log


class ReplayError(ValueError):
    """The log cannot be replayed (missing config, unknown record kinds)."""


@dataclass
class Divergence:
    index: int
    expected: dict[str, Any] | None
    actual: dict[str, Any] | None

    def __str__(self) -> str:
        return f"event {self.index}: logged {self.expected} vs replayed {self.actual}"


@dataclass
class ReplayReport:
    samples_replayed: int = 0
    events_compared: int = 0
    zone_mismatches: int = 0
    skipped_lines: list[tuple[int, str]] = field(default_factory=list)
    divergences: list[Divergence] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.divergences and self.zone_mismatches == 0


def _event_key(record: dict[str, Any]) -> tuple:
    return (
        int(record["ts_ms"]),
        record["kind"],
        record.get("angle_deg"),
        record.get("session_id"),
    )


def replay_records(records: list[dict[str, Any]]) -> ReplayReport:
    report = ReplayReport()
    engine: PostureEngine | None = None
    expected: list[dict[str, Any]] = []
    actual: list[dict[str, Any]] = []
    engine_kind_values = {k.value for k in ev.ENGINE_EVENT_KINDS}

    for record in records:
        kind = record.get("kind")
        if kind == ev.KIND_META or kind == ev.KIND_CONFIG_CHANGE:
            config = MonitorConfig.from_record(record["monitor"])
            if engine is None:
                engine = PostureEngine(config)
            else:
                engine.update_config(config)
            continue
        if engine is None:
            raise ReplayError("log has no Meta record before its first input")
        if kind == ev.EventKind.SESSION_START.value:
            expected.append(record)
            emitted = engine.start_session(int(record["ts_ms"]), record["session_id"])
            actual.extend(e.to_record() for e in emitted)
            continue
        if kind == ev.EventKind.SESSION_STOP.value:
            expected.append(record)
            emitted = engine.stop_session(int(record["ts_ms"]))
            actual.extend(e.to_record() for e in emitted)
            continue
        if kind == ev.KIND_SAMPLE:
            sample = Sample(
                ts_ms=int(record["ts_ms"]),
                angle_deg=record.get("angle_deg"),
                counts=record.get("counts"),
                degraded=bool(record.get("degraded", False)),
            )
            emitted, _ = engine.step(sample)
            actual.extend(e.to_record() for e in emitted)
            report.samples_replayed += 1
            logged_zone = record.get("zone")
            replayed_zone = engine.snapshot().zone
            if logged_zone is not None and replayed_zone is not None:
                if logged_zone != replayed_zone.value:
                    report.zone_mismatches += 1
            continue
        if kind in engine_kind_values:
            expected.append(record)
            continue
        # Link-state and actuation records pass through uncompared.

    for i in range(max(len(expected), len(actual))):
        want = expected[i] if i < len(expected) else None
        got = actual[i] if i < len(actual) else None
        report.events_compared += 1
        if want is None or got is None or _event_key(want) != _event_key(got):
            report.divergences.append(Divergence(index=i, expected=want, actual=got))
    return report


def replay_log(path: str | Path) -> ReplayReport:
    parsed = read_log(path)
    report = replay_records(parsed.records)
    report.skipped_lines = parsed.skipped
    return report
