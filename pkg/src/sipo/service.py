"""Host-side monitor: device link, calibration, alert engine, log, publisher.

One thread owns the device stream end to end: read bytes, decode frames,
convert counts to an angle, step the engine, append to the session log, push
Vibrate commands back down the wire, and fan records out to stream
subscribers.  API calls (thresholds, sessions) mutate engine state under the
same lock as the stepping, so no step ever sees a torn configuration.  A lost
device link triggers bounded exponential-backoff reconnect (250 ms doubling
to a 5 s cap) bracketed by DeviceLost/DeviceRestored events.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from dataclasses import replace
from typing import Any

from . import events as ev
from . import protocol
from .calibration import CalibrationModel, invert
from .config import ServiceConfig, resolve_model
from .engine import (
    ConfigError,
    MonitorConfig,
    OrderingError,
    PostureEngine,
    Sample,
    SessionStateError,
    ThresholdMode,
    set_baseline,
)
from .eventlog import EventLogWriter, LogWriteError, read_log
from .transport import SocketTransport, StdioTransport, TransportError, connect, parse_endpoint

RECONNECT_INITIAL_S = 0.25
RECONNECT_CAP_S = 5.0


class ServiceStartupError(RuntimeError):
    """Fatal misconfiguration at startup (device unreachable, log unwritable)."""


class ApiConflict(RuntimeError):
    """Request is valid but conflicts with current service state."""


class ApiNotFound(RuntimeError):
    """Requested entity does not exist."""


class ApiValidationError(ValueError):
    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class Broadcaster:
    """Fan-out of stream records to subscriber queues, in publish order."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=1000)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, record: dict[str, Any]) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            try:
                q.put_nowait(record)
            except queue.Full:
                pass  # slow consumer drops records rather than stalling the pipeline

    def count(self) -> int:
        with self._lock:
            return len(self._subscribers)


class MonitorService:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.model: CalibrationModel = resolve_model(config.model)
        self._counts_lo = self.model.counts_min
        self._counts_hi = self.model.counts_max
        self._lock = threading.RLock()
        self._engine = PostureEngine(config.monitor)
        self._broadcaster = Broadcaster()
        self._log: EventLogWriter | None = None
        self._transport: SocketTransport | StdioTransport | None = None
        self._device_thread: threading.Thread | None = None
        self._stopping = threading.Event()
        self._connected = False
        self._ts_base = 0
        self._rebase_pending = False
        self._last_engine_ts: int | None = None
        self._known_sessions: set[str] = set()
        self.persistence_failed = False
        self.counters: dict[str, int] = {
            "frames_total": 0,
            "frames_sensor": 0,
            "frames_heartbeat": 0,
            "frames_ack": 0,
            "frames_other": 0,
            "frames_corrupt": 0,
            "ordering_errors": 0,
            "vibrates_sent": 0,
            "reconnects": 0,
        }

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        try:
            self._log = EventLogWriter(self.config.log_path)
        except LogWriteError as exc:
            raise ServiceStartupError(f"session log is not writable: {exc}") from exc
        try:
            self._transport = self._open_transport()
        except TransportError as exc:
            self._log.close()
            raise ServiceStartupError(
                f"device at {self.config.device} is unreachable: {exc}"
            ) from exc
        self._connected = True
        self._append(self._meta_record())
        self._device_thread = threading.Thread(
            target=self._device_loop, name="sipo-device", daemon=True
        )
        self._device_thread.start()

    def stop(self) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        transport = self._transport
        if transport is not None:
            try:
                transport.close()
            except OSError:
                pass
        if self._device_thread is not None:
            self._device_thread.join(timeout=5.0)
        self._broadcaster.publish({"type": "shutdown"})
        if self._log is not None:
            try:
                self._log.close()
            except LogWriteError:
                pass

    def join(self) -> None:
        if self._device_thread is not None:
            self._device_thread.join()

    def _open_transport(self):
        endpoint = parse_endpoint(self.config.device)
        if endpoint.is_stdio:
            return StdioTransport()
        return connect(endpoint.host, endpoint.port, timeout=5.0)

    def _meta_record(self) -> dict[str, Any]:
        return {
            "ts_ms": self._last_engine_ts or 0,
            "kind": ev.KIND_META,
            "device": self.config.device,
            "model": self.config.model,
            "monitor": self._engine.config.to_record(),
        }

    # -- device loop -----------------------------------------------------------

    def _device_loop(self) -> None:
        decoder = protocol.StreamDecoder()
        while not self._stopping.is_set():
            try:
                data = self._transport.read(4096, timeout=0.25)
            except TransportError:
                data = b""
            if data is None:
                continue
            if data == b"":
                if self._stopping.is_set():
                    break
                self._on_device_lost()
                if not self._reconnect():
                    break
                decoder = protocol.StreamDecoder()
                continue
            frames, errors = decoder.feed(data)
            recv_ns = time.monotonic_ns()
            if errors:
                with self._lock:
                    self.counters["frames_corrupt"] += len(errors)
            for frame in frames:
                self._process_frame(frame, recv_ns)

    def _reconnect(self) -> bool:
        delay = RECONNECT_INITIAL_S
        while not self._stopping.is_set():
            if self._stopping.wait(delay):
                return False
            try:
                self._transport = self._open_transport()
            except TransportError:
                delay = min(delay * 2, RECONNECT_CAP_S)
                continue
            with self._lock:
                self.counters["reconnects"] += 1
            self._on_device_restored()
            return True
        return False

    def _on_device_lost(self) -> None:
        with self._lock:
            self._connected = False
            record = {
                "ts_ms": self._last_engine_ts or 0,
                "kind": ev.EventKind.DEVICE_LOST.value,
                "session_id": self._engine.snapshot().session_id,
            }
            self._append(record)
            self._publish_event(record)

    def _on_device_restored(self) -> None:
        with self._lock:
            self._connected = True
            self._rebase_pending = True
            record = {
                "ts_ms": self._last_engine_ts or 0,
                "kind": ev.EventKind.DEVICE_RESTORED.value,
                "session_id": self._engine.snapshot().session_id,
            }
            self._append(record)
            self._publish_event(record)

    def _process_frame(self, frame: protocol.Frame, recv_ns: int) -> None:
        with self._lock:
            self.counters["frames_total"] += 1
            if isinstance(frame, protocol.SensorData):
                self.counters["frames_sensor"] += 1
                self._process_sensor(frame, recv_ns)
            elif isinstance(frame, protocol.Heartbeat):
                self.counters["frames_heartbeat"] += 1
            elif isinstance(frame, protocol.Ack):
                self.counters["frames_ack"] += 1
            else:
                self.counters["frames_other"] += 1

    def _process_sensor(self, frame: protocol.SensorData, recv_ns: int) -> None:
        # A device restart resets its clock; re-base so engine time stays monotone.
        if self._rebase_pending:
            if self._last_engine_ts is not None and frame.ts_ms + self._ts_base <= self._last_engine_ts:
                self._ts_base = self._last_engine_ts + 1 - frame.ts_ms
            self._rebase_pending = False
        ts = frame.ts_ms + self._ts_base
        angle, degraded = self._convert(frame.value)
        sample = Sample(ts_ms=ts, angle_deg=angle, counts=float(frame.value), degraded=degraded)
        try:
            emitted, commands = self._engine.step(sample)
        except OrderingError:
            self.counters["ordering_errors"] += 1
            return
        self._last_engine_ts = ts
        snapshot = self._engine.snapshot()
        record: dict[str, Any] = {
            "ts_ms": ts,
            "kind": ev.KIND_SAMPLE,
            "counts": frame.value,
            "angle_deg": angle,
            "zone": snapshot.zone.value,
        }
        if degraded:
            record["degraded"] = True
        record["session_id"] = snapshot.session_id
        self._append(record)
        self._broadcaster.publish({"type": "sample", **record, "recv_ns": recv_ns})
        for event in emitted:
            event_record = event.to_record()
            self._append(event_record)
            self._publish_event(event_record)
        for command in commands:
            self._send_vibrate(command.duration_ms)

    def _convert(self, counts: int) -> tuple[float, bool]:
        """Counts to degrees; out-of-range counts clamp to the domain edge."""
        if counts < self._counts_lo:
            return self.model.angle_min, True
        if counts > self._counts_hi:
            return self.model.angle_max, True
        return invert(self.model, float(counts)), False

    def _send_vibrate(self, duration_ms: int) -> None:
        frame = protocol.encode_frame(protocol.Vibrate(duration_ms=duration_ms))
        try:
            self._transport.write(frame)
            self.counters["vibrates_sent"] += 1
        except TransportError:
            pass  # link loss is handled by the read side

    def _append(self, record: dict[str, Any]) -> None:
        if self._log is None:
            return
        try:
            self._log.append(record)
        except LogWriteError:
            # Degraded mode: streaming continues, durability is flagged.
            self.persistence_failed = True

    def _publish_event(self, record: dict[str, Any]) -> None:
        self._broadcaster.publish({"type": "event", **record})

    # -- API-facing operations ---------------------------------------------------

    def subscribe(self) -> queue.Queue:
        return self._broadcaster.subscribe()

    def unsubscribe(self, q: queue.Queue) -> None:
        self._broadcaster.unsubscribe(q)

    def status(self) -> dict[str, Any]:
        with self._lock:
            snapshot = self._engine.snapshot()
            status: dict[str, Any] = {
                "connected": self._connected,
                "device": self.config.device,
                "model": self.config.model,
                "model_domain_deg": [self.model.angle_min, self.model.angle_max],
                "zone": snapshot.zone.value if snapshot.zone is not None else "unknown",
                "angle_deg": snapshot.angle_deg,
                "counts": snapshot.counts,
                "ts_ms": snapshot.last_ts_ms,
                "alert_active": snapshot.alert_active,
                "session_id": snapshot.session_id,
                "session_start_ts_ms": snapshot.session_start_ts_ms,
                "sit_limit_fired": snapshot.sit_limit_fired,
                "monitor": snapshot.config.to_record(),
                "persistence_failed": self.persistence_failed,
                "subscribers": self._broadcaster.count(),
                "counters": dict(self.counters),
            }
            if snapshot.session_id is not None and snapshot.last_ts_ms is not None:
                status["session_elapsed_ms"] = snapshot.last_ts_ms - snapshot.session_start_ts_ms
            return status

    def start_session(self) -> str:
        with self._lock:
            ts = self._last_engine_ts if self._last_engine_ts is not None else 0
            session_id = f"s-{uuid.uuid4().hex[:12]}"
            try:
                emitted = self._engine.start_session(ts, session_id)
            except SessionStateError as exc:
                raise ApiConflict(str(exc)) from exc
            self._known_sessions.add(session_id)
            for event in emitted:
                record = event.to_record()
                self._append(record)
                self._publish_event(record)
            return session_id

    def stop_session(self) -> str:
        with self._lock:
            snapshot = self._engine.snapshot()
            if snapshot.session_id is None:
                raise ApiConflict("no active session")
            ts = self._last_engine_ts if self._last_engine_ts is not None else 0
            emitted = self._engine.stop_session(ts)
            for event in emitted:
                record = event.to_record()
                self._append(record)
                self._publish_event(record)
            return snapshot.session_id

    def capture_baseline(self) -> MonitorConfig:
        with self._lock:
            if not self._connected:
                raise ApiConflict("device is disconnected; cannot capture a baseline")
            snapshot = self._engine.snapshot()
            if snapshot.counts is None:
                raise ApiConflict("no sensor sample received yet")
            try:
                new_config = set_baseline(snapshot.counts, self._engine.config)
            except ConfigError as exc:
                raise ApiValidationError(str(exc)) from exc
            self._swap_config(new_config)
            return new_config

    def set_zone_thresholds(self, safe_low: float, safe_high: float) -> MonitorConfig:
        with self._lock:
            if not self._connected:
                raise ApiConflict("device is disconnected; cannot set thresholds")
            try:
                new_config = replace(
                    self._engine.config,
                    mode=ThresholdMode.ANGLE_ZONE,
                    safe_low=float(safe_low),
                    safe_high=float(safe_high),
                )
            except (ConfigError, TypeError, ValueError) as exc:
                raise ApiValidationError(str(exc), fields=["safe_low", "safe_high"]) from exc
            self._swap_config(new_config)
            return new_config

    def _swap_config(self, new_config: MonitorConfig) -> None:
        self._engine.update_config(new_config)
        record = {
            "ts_ms": self._last_engine_ts or 0,
            "kind": ev.KIND_CONFIG_CHANGE,
            "monitor": new_config.to_record(),
        }
        self._append(record)
        self._broadcaster.publish({"type": "config", **record})

    def session_log(self, session_id: str) -> list[dict[str, Any]]:
        with self._lock:
            if self._log is not None:
                try:
                    self._log.sync()
                except LogWriteError:
                    pass
        parsed = read_log(self.config.log_path)
        records = [r for r in parsed.records if r.get("session_id") == session_id]
        if not records and session_id not in self._known_sessions:
            raise ApiNotFound(f"unknown session {session_id!r}")
        return records
