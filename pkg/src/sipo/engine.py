"""Zone classification and the debounced posture-alert state machine.

The engine is driven purely by input timestamps (device-monotonic ms), never
by the wall clock, so a captured sample stream replays to the identical event
sequence.  Alert schedule: an excursion out of the safe zone that persists for
``debounce_ms`` fires a ZoneExit plus a vibrate command, then repeats the
vibrate every ``vibrate_repeat_ms`` (anchored to the excursion start) until
the posture returns to the safe zone, which fires ZoneReenter.  Excursions
shorter than the debounce produce no events at all.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Union

from .events import EventKind, SessionEvent

ADC_MAX = 1023

# Typical upright sitting band; the Normal zone is this band clipped to the
# configured safe zone so Normal always implies Safe.
NORMAL_LOW_DEG = 90.0
NORMAL_HIGH_DEG = 95.0


class PostureZone(str, enum.Enum):
    NORMAL = "Normal"
    SAFE = "Safe"
    OUT_OF_ZONE = "OutOfZone"


class ThresholdMode(str, enum.Enum):
    ANGLE_ZONE = "angle_zone"
    SENSOR_BASELINE = "sensor_baseline"


class ConfigError(ValueError):
    """Invalid monitor configuration."""


class OrderingError(ValueError):
    """Input timestamp went backwards; engine state is unchanged."""


class SessionStateError(RuntimeError):
    """Session start/stop called in the wrong state."""


@dataclass(frozen=True)
class MonitorConfig:
    """Threshold and timing parameters for the posture engine."""

    mode: ThresholdMode = ThresholdMode.ANGLE_ZONE
    safe_low: float = 90.0
    safe_high: float = 110.0
    baseline_counts: float | None = None
    baseline_tolerance: float = 36.0
    debounce_ms: int = 2000
    vibrate_repeat_ms: int = 10000
    sit_limit_ms: int = 1_800_000

    def __post_init__(self) -> None:
        if not self.safe_low < self.safe_high:
            raise ConfigError(f"safe_low ({self.safe_low}) must be below safe_high ({self.safe_high})")
        if self.debounce_ms < 0:
            raise ConfigError("debounce_ms must be >= 0")
        if self.vibrate_repeat_ms <= self.debounce_ms:
            raise ConfigError("vibrate_repeat_ms must exceed debounce_ms")
        if self.sit_limit_ms <= 0:
            raise ConfigError("sit_limit_ms must be positive")
        if self.baseline_tolerance <= 0:
            raise ConfigError("baseline_tolerance must be positive")
        if self.mode is ThresholdMode.SENSOR_BASELINE:
            if self.baseline_counts is None:
                raise ConfigError("sensor_baseline mode requires baseline_counts")
            if not 0 <= self.baseline_counts <= ADC_MAX:
                raise ConfigError(f"baseline_counts must be within [0, {ADC_MAX}]")

    def to_record(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "safe_low": self.safe_low,
            "safe_high": self.safe_high,
            "baseline_counts": self.baseline_counts,
            "baseline_tolerance": self.baseline_tolerance,
            "debounce_ms": self.debounce_ms,
            "vibrate_repeat_ms": self.vibrate_repeat_ms,
            "sit_limit_ms": self.sit_limit_ms,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "MonitorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown monitor config fields: {sorted(unknown)}")
        kwargs = dict(record)
        if "mode" in kwargs:
            kwargs["mode"] = ThresholdMode(kwargs["mode"])
        for key in ("debounce_ms", "vibrate_repeat_ms", "sit_limit_ms"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return cls(**kwargs)


def classify_zone(angle_deg: float, config: MonitorConfig) -> PostureZone:
    """Boundary-inclusive three-way classification of a bending angle."""
    if config.mode is not ThresholdMode.ANGLE_ZONE:
        raise ConfigError("classify_zone requires angle_zone mode")
    if not math.isfinite(angle_deg):
        raise ValueError(f"angle must be finite, got {angle_deg}")
    if not config.safe_low <= angle_deg <= config.safe_high:
        return PostureZone.OUT_OF_ZONE
    if max(NORMAL_LOW_DEG, config.safe_low) <= angle_deg <= min(NORMAL_HIGH_DEG, config.safe_high):
        return PostureZone.NORMAL
    return PostureZone.SAFE


def classify_counts(counts: float, config: MonitorConfig) -> PostureZone:
    """Baseline-mode classification: within tolerance of the captured counts."""
    if config.mode is not ThresholdMode.SENSOR_BASELINE:
        raise ConfigError("classify_counts requires sensor_baseline mode")
    if abs(counts - config.baseline_counts) <= config.baseline_tolerance:
        return PostureZone.SAFE
    return PostureZone.OUT_OF_ZONE


def set_baseline(current_counts: float, config: MonitorConfig) -> MonitorConfig:
    """Capture the user's comfortable sensor value as the active threshold."""
    if not math.isfinite(current_counts) or not 0 <= current_counts <= ADC_MAX:
        raise ConfigError(f"baseline counts must be within [0, {ADC_MAX}], got {current_counts}")
    return replace(
        config, mode=ThresholdMode.SENSOR_BASELINE, baseline_counts=current_counts
    )


@dataclass(frozen=True)
class Sample:
    """One observation for the engine; angle and/or counts per threshold mode."""

    ts_ms: int
    angle_deg: float | None = None
    counts: float | None = None
    degraded: bool = False  # counts fell outside calibration range; forced out-of-zone


@dataclass(frozen=True)
class Tick:
    """Time advance with no new observation (fires due alerts and the timer)."""

    ts_ms: int


EngineInput = Union[Sample, Tick]


@dataclass(frozen=True)
class VibrateCommand:
    duration_ms: int = 400


@dataclass
class EngineSnapshot:
    """Read-only state view for status endpoints."""

    last_ts_ms: int | None
    zone: PostureZone | None
    angle_deg: float | None
    counts: float | None
    session_id: str | None
    session_start_ts_ms: int | None
    sit_limit_fired: bool
    alert_active: bool
    config: MonitorConfig


class PostureEngine:
    """Deterministic alerting state machine; one owner, stepped sequentially."""

    def __init__(self, config: MonitorConfig):
        self._config = config
        self._last_ts: int | None = None
        self._zone: PostureZone | None = None
        self._angle: float | None = None
        self._counts: float | None = None
        # excursion bookkeeping
        self._excursion_start: int | None = None
        self._alert_active = False
        self._next_vibrate_due: int | None = None
        # session bookkeeping
        self._session_id: str | None = None
        self._session_start: int | None = None
        self._sit_limit_fired = False

    @property
    def config(self) -> MonitorConfig:
        return self._config

    def snapshot(self) -> EngineSnapshot:
        return EngineSnapshot(
            last_ts_ms=self._last_ts,
            zone=self._zone,
            angle_deg=self._angle,
            counts=self._counts,
            session_id=self._session_id,
            session_start_ts_ms=self._session_start,
            sit_limit_fired=self._sit_limit_fired,
            alert_active=self._alert_active,
            config=self._config,
        )

    def update_config(self, config: MonitorConfig) -> None:
        """Swap thresholds; the zone is re-evaluated on the next sample."""
        self._config = config

    def start_session(self, ts_ms: int, session_id: str) -> list[SessionEvent]:
        if self._session_id is not None:
            raise SessionStateError(f"session {self._session_id} already active")
        self._check_ts(ts_ms)
        self._session_id = session_id
        self._session_start = ts_ms
        self._sit_limit_fired = False
        self._last_ts = ts_ms
        return [SessionEvent(ts_ms=ts_ms, kind=EventKind.SESSION_START, session_id=session_id)]

    def stop_session(self, ts_ms: int) -> list[SessionEvent]:
        if self._session_id is None:
            raise SessionStateError("no active session")
        self._check_ts(ts_ms)
        event = SessionEvent(ts_ms=ts_ms, kind=EventKind.SESSION_STOP, session_id=self._session_id)
        self._session_id = None
        self._session_start = None
        self._sit_limit_fired = False
        self._last_ts = ts_ms
        return [event]

    def step(self, inp: EngineInput) -> tuple[list[SessionEvent], list[VibrateCommand]]:
        """Advance the machine to the input's timestamp and apply it.

        Due alerts are fired both before and after a sample's zone change:
        the pre-pass settles alerts the elapsed time made due (including a
        repeat falling exactly on a re-entry instant), the post-pass covers a
        zero-debounce excursion starting at this very sample.
        """
        ts = inp.ts_ms
        self._check_ts(ts)
        events: list[SessionEvent] = []
        commands: list[VibrateCommand] = []

        self._fire_due(ts, events, commands)
        if isinstance(inp, Sample):
            self._apply_sample(inp, events)
            self._fire_due(ts, events, commands)
        self._check_sit_limit(ts, events)
        self._last_ts = ts
        return events, commands

    # -- internals ------------------------------------------------------------

    def _check_ts(self, ts_ms: int) -> None:
        if self._last_ts is not None and ts_ms < self._last_ts:
            raise OrderingError(
                f"timestamp {ts_ms} ms precedes last seen {self._last_ts} ms"
            )

    def _classify(self, sample: Sample) -> PostureZone:
        if sample.degraded:
            return PostureZone.OUT_OF_ZONE
        if self._config.mode is ThresholdMode.ANGLE_ZONE:
            if sample.angle_deg is None:
                raise ValueError("angle_zone mode requires samples with an angle")
            return classify_zone(sample.angle_deg, self._config)
        if sample.counts is None:
            raise ValueError("sensor_baseline mode requires samples with counts")
        return classify_counts(sample.counts, self._config)

    def _apply_sample(self, sample: Sample, events: list[SessionEvent]) -> None:
        zone = self._classify(sample)
        if zone is PostureZone.OUT_OF_ZONE:
            if self._excursion_start is None:
                self._excursion_start = sample.ts_ms
        elif self._excursion_start is not None:
            if self._alert_active:
                events.append(
                    SessionEvent(
                        ts_ms=sample.ts_ms,
                        kind=EventKind.ZONE_REENTER,
                        angle_deg=sample.angle_deg,
                        session_id=self._session_id,
                    )
                )
            self._excursion_start = None
            self._alert_active = False
            self._next_vibrate_due = None
        self._zone = zone
        self._angle = sample.angle_deg
        self._counts = sample.counts

    def _fire_due(self, ts: int, events: list[SessionEvent], commands: list[VibrateCommand]) -> None:
        if self._excursion_start is None:
            return
        if not self._alert_active:
            due = self._excursion_start + self._config.debounce_ms
            if due > ts:
                return
            self._alert_active = True
            self._next_vibrate_due = due + self._config.vibrate_repeat_ms
            events.append(
                SessionEvent(
                    ts_ms=ts,
                    kind=EventKind.ZONE_EXIT,
                    angle_deg=self._angle,
                    session_id=self._session_id,
                )
            )
            events.append(
                SessionEvent(
                    ts_ms=ts,
                    kind=EventKind.VIBRATE_SENT,
                    angle_deg=self._angle,
                    session_id=self._session_id,
                )
            )
            commands.append(VibrateCommand())
        # repeats are anchored to the excursion start, not to emission times
        while self._next_vibrate_due is not None and self._next_vibrate_due <= ts:
            self._next_vibrate_due += self._config.vibrate_repeat_ms
            events.append(
                SessionEvent(
                    ts_ms=ts,
                    kind=EventKind.VIBRATE_SENT,
                    angle_deg=self._angle,
                    session_id=self._session_id,
                )
            )
            commands.append(VibrateCommand())

    def _check_sit_limit(self, ts: int, events: list[SessionEvent]) -> None:
        if self._session_id is None or self._sit_limit_fired:
            return
        if self._session_start + self._config.sit_limit_ms <= ts:
            self._sit_limit_fired = True
            events.append(
                SessionEvent(
                    ts_ms=ts,
                    kind=EventKind.SIT_LIMIT_REACHED,
                    session_id=self._session_id,
                )
            )
