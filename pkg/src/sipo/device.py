"""Simulated wearable device: scripted bending trajectories to sensor frames.

A trajectory is piecewise-linear angle vs. time.  The simulator samples it at
a fixed rate, pushes each angle through a calibration model plus seeded
Gaussian noise, quantizes to integer ADC counts, and streams encoded frames
over a transport.  It answers Vibrate commands with an Ack and an actuation
log entry, and emits a Heartbeat every second of device time.  Frame
timestamps come from the sample schedule (exact under --no-pace) so runs are
reproducible byte for byte.
"""

from __future__ import annotations

import random
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from . import events, protocol
from .calibration import AngleDomainError, CalibrationModel, eval_forward

ADC_MAX = 1023
HEARTBEAT_PERIOD_MS = 1000
VIBRATE_PULSE_MS = 400


class TrajectoryError(ValueError):
    """Invalid trajectory specification."""


class GenerationError(ValueError):
    """Trajectory asks the calibration model for an angle it cannot produce."""


@dataclass(frozen=True)
class SensorSample:
    """One timestamped raw flex-sensor reading in ADC counts."""

    ts_ms: int
    value: int


@dataclass(frozen=True)
class TrajectorySpec:
    """Piecewise-linear bending-angle script plus sampling parameters."""

    waypoints: tuple[tuple[int, float], ...]
    noise_sigma: float = 1.0
    sample_rate_hz: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise TrajectoryError("trajectory needs at least two waypoints")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise TrajectoryError("waypoint times must be strictly increasing")
        if not 0.0 < self.sample_rate_hz <= 1000.0:
            raise TrajectoryError("sample_rate_hz must be in (0, 1000]")
        if self.noise_sigma < 0.0:
            raise TrajectoryError("noise_sigma must be >= 0")

    @property
    def start_ms(self) -> int:
        return self.waypoints[0][0]

    @property
    def end_ms(self) -> int:
        return self.waypoints[-1][0]


def angle_at(spec: TrajectorySpec, t_ms: float) -> float:
    """Linear interpolation between waypoints, clamped at the ends."""
    times = [t for t, _ in spec.waypoints]
    if t_ms <= times[0]:
        return spec.waypoints[0][1]
    if t_ms >= times[-1]:
        return spec.waypoints[-1][1]
    i = bisect_right(times, t_ms)
    t0, a0 = spec.waypoints[i - 1]
    t1, a1 = spec.waypoints[i]
    return a0 + (a1 - a0) * (t_ms - t0) / (t1 - t0)


def sample_trajectory(spec: TrajectorySpec, model: CalibrationModel) -> list[SensorSample]:
    """Quantized sensor readings over [start, end) at the configured rate."""
    rng = random.Random(spec.seed)
    period_ms = 1000.0 / spec.sample_rate_hz
    samples: list[SensorSample] = []
    k = 0
    while True:
        t = spec.start_ms + k * period_ms
        if t >= spec.end_ms:
            break
        angle = angle_at(spec, t)
        try:
            clean = eval_forward(model, angle)
        except AngleDomainError as exc:
            raise GenerationError(
                f"at t={t:.0f} ms the trajectory angle {angle:.3f} deg leaves the "
                f"model domain: {exc}"
            ) from exc
        noisy = clean + rng.gauss(0.0, spec.noise_sigma)
        value = min(ADC_MAX, max(0, round(noisy)))
        samples.append(SensorSample(ts_ms=round(t), value=value))
        k += 1
    return samples


def load_trajectory_csv(path: str | Path) -> tuple[tuple[int, float], ...]:
    """Waypoints from a CSV with header time_ms,angle_deg."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"time_ms", "angle_deg"}.issubset(reader.fieldnames):
            raise TrajectoryError(f"{path}: expected CSV header time_ms,angle_deg")
        waypoints = []
        for row_no, row in enumerate(reader, 2):
            try:
                waypoints.append((int(row["time_ms"]), float(row["angle_deg"])))
            except (TypeError, ValueError):
                raise TrajectoryError(f"{path}: row {row_no}: non-numeric waypoint") from None
    if not waypoints:
        raise TrajectoryError(f"{path}: no waypoints")
    return tuple(waypoints)


@dataclass
class DeviceReport:
    """Counters from one simulator run."""

    sensor_frames_sent: int = 0
    heartbeats_sent: int = 0
    vibrates_received: int = 0
    acks_sent: int = 0
    inbound_errors: int = 0
    inbound_ignored: int = 0
    completed: bool = False
    error: str | None = None
    actuations: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "sensor_frames_sent": self.sensor_frames_sent,
            "heartbeats_sent": self.heartbeats_sent,
            "vibrates_received": self.vibrates_received,
            "acks_sent": self.acks_sent,
            "inbound_errors": self.inbound_errors,
            "inbound_ignored": self.inbound_ignored,
            "completed": self.completed,
            "error": self.error,
        }


def _schedule(spec: TrajectorySpec, samples: list[SensorSample]) -> list[tuple[int, str, SensorSample | None]]:
    entries: list[tuple[int, int, str, SensorSample | None]] = [
        (s.ts_ms, 0, "sample", s) for s in samples
    ]
    t = spec.start_ms + HEARTBEAT_PERIOD_MS
    while t < spec.end_ms:
        entries.append((t, 1, "heartbeat", None))
        t += HEARTBEAT_PERIOD_MS
    entries.sort(key=lambda e: (e[0], e[1]))
    return [(ts, kind, payload) for ts, _, kind, payload in entries]


class DeviceRunner:
    """Single-threaded device loop: paced emission plus inbound command handling."""

    def __init__(
        self,
        spec: TrajectorySpec,
        model: CalibrationModel,
        transport,
        *,
        pace: bool = True,
        actuation_log_path: str | Path | None = None,
        linger_ms: int = 500,
    ):
        self.spec = spec
        self.model = model
        self.transport = transport
        self.pace = pace
        self.linger_ms = linger_ms
        self.report = DeviceReport()
        self._decoder = protocol.StreamDecoder()
        self._log_fh = open(actuation_log_path, "a", encoding="utf-8") if actuation_log_path else None
        self._device_ts = spec.start_ms  # last schedule position reached
        self._last_wire_ts: int | None = None
        self._wall_start = time.monotonic()

    def _now_ms(self) -> int:
        if self.pace:
            return self.spec.start_ms + int((time.monotonic() - self._wall_start) * 1000)
        return self._device_ts

    def _log_actuation(self, duration_ms: int) -> None:
        record = {
            "ts_ms": self._now_ms(),
            "kind": events.KIND_VIBRATE_ACTUATED,
            "duration_ms": duration_ms,
        }
        self.report.actuations.append(record)
        if self._log_fh is not None:
            self._log_fh.write(events.encode_record(record) + "\n")
            self._log_fh.flush()

    def _handle_inbound(self, timeout: float) -> bool:
        """Service inbound bytes; returns False when the transport closed."""
        data = self.transport.read(4096, timeout=timeout)
        if data is None:
            return True
        if data == b"":
            return False
        frames, errors = self._decoder.feed(data)
        self.report.inbound_errors += len(errors)
        for frame in frames:
            if isinstance(frame, protocol.Vibrate):
                self.report.vibrates_received += 1
                self._log_actuation(frame.duration_ms)
                self.transport.write(
                    protocol.encode_frame(protocol.Ack(acked_type=int(protocol.FrameType.VIBRATE)))
                )
                self.report.acks_sent += 1
            else:
                self.report.inbound_ignored += 1
        return True

    def run(self) -> DeviceReport:
        try:
            return self._run()
        finally:
            if self._log_fh is not None:
                self._log_fh.close()

    def _run(self) -> DeviceReport:
        samples = sample_trajectory(self.spec, self.model)
        schedule = _schedule(self.spec, samples)
        try:
            for ts, kind, payload in schedule:
                if self.pace:
                    deadline = self._wall_start + (ts - self.spec.start_ms) / 1000.0
                    while True:
                        remaining = deadline - time.monotonic()
                        if remaining <= 0:
                            break
                        if not self._handle_inbound(timeout=min(remaining, 0.05)):
                            return self.report  # peer closed: clean partial run
                else:
                    if not self._handle_inbound(timeout=0.0):
                        return self.report
                self._device_ts = ts
                if kind == "sample":
                    if self.pace:
                        # Wall-derived stamp, forced strictly increasing.
                        wire_ts = max(self._now_ms(), ts)
                        if self._last_wire_ts is not None and wire_ts <= self._last_wire_ts:
                            wire_ts = self._last_wire_ts + 1
                        self._last_wire_ts = wire_ts
                    else:
                        wire_ts = ts
                    frame = protocol.SensorData(ts_ms=wire_ts, value=payload.value)
                    self.transport.write(protocol.encode_frame(frame))
                    self.report.sensor_frames_sent += 1
                else:
                    self.transport.write(protocol.encode_frame(protocol.Heartbeat()))
                    self.report.heartbeats_sent += 1
            # Drain window: the host may still be reacting to the last samples.
            linger_until = time.monotonic() + self.linger_ms / 1000.0
            while time.monotonic() < linger_until:
                if not self._handle_inbound(timeout=0.05):
                    break
            self.report.completed = True
        except OSError as exc:
            self.report.error = str(exc)
        finally:
            try:
                self.transport.close()
            except OSError:
                pass
        return self.report


def run_device(
    spec: TrajectorySpec,
    model: CalibrationModel,
    transport,
    *,
    pace: bool = True,
    actuation_log_path: str | Path | None = None,
    linger_ms: int = 500,
) -> DeviceReport:
    """Run the simulated device to trajectory end or transport close."""
    return DeviceRunner(
        spec,
        model,
        transport,
        pace=pace,
        actuation_log_path=actuation_log_path,
        linger_ms=linger_ms,
    ).run()
