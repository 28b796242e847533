import json
import socket

import pytest

from sipo.api import ApiServer
from sipo.config import ServiceConfig
from sipo.engine import MonitorConfig
from sipo.eventlog import LogWriteError, read_log
from sipo.protocol import StreamDecoder, Vibrate, encode_frame, SensorData
from sipo.replay import replay_log
from sipo.service import MonitorService, ServiceStartupError

from service_helpers import (
    FakeDevice,
    StreamClient,
    api_get,
    api_post,
    send_samples,
    wait_until,
)

UPRIGHT = 513  # counts at 90 deg under the reference model
LEANING = 562  # counts at ~115 deg


class Env:
    def __init__(self, tmp_path, monitor: MonitorConfig | None = None):
        self.fake = FakeDevice()
        self.log_path = tmp_path / "session.log"
        config = ServiceConfig(
            device=f"127.0.0.1:{self.fake.port}",
            api_host="127.0.0.1",
            api_port=0,
            log_path=str(self.log_path),
            monitor=monitor or MonitorConfig(),
        )
        self.service = MonitorService(config)
        self.service.start()
        self.conn = self.fake.accept()
        self.api = ApiServer(self.service, "127.0.0.1", 0)
        self.api.start()
        self.port = self.api.port

    def status(self):
        return api_get(self.port, "/status")[1]

    def close(self):
        self.service.stop()
        self.api.stop()
        self.fake.close()


@pytest.fixture
def env(tmp_path):
    e = Env(tmp_path)
    yield e
    e.close()


def test_cold_start_status(env):
    status = env.status()
    assert status["connected"] is True
    assert status["zone"] == "unknown"
    assert status["angle_deg"] is None
    assert status["counters"]["frames_sensor"] == 0


def test_sample_updates_status(env):
    send_samples(env.conn, [(0, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    status = env.status()
    assert status["zone"] == "Normal"
    assert abs(status["angle_deg"] - 90.0) < 0.02
    assert status["counts"] == UPRIGHT


def test_corrupt_frames_are_counted(env):
    frame = bytearray(encode_frame(SensorData(ts_ms=0, value=UPRIGHT)))
    frame[-1] ^= 0xFF
    env.conn.sendall(bytes(frame) * 3)
    send_samples(env.conn, [(100, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    assert env.status()["counters"]["frames_corrupt"] == 3


def test_stream_pushes_samples_and_hello(env):
    with StreamClient(env.port) as stream:
        send_samples(env.conn, [(0, UPRIGHT), (50, UPRIGHT)])
        records = stream.drain_until(
            lambda r: r.get("type") == "sample" and r.get("ts_ms") == 50
        )
    assert records[0]["type"] == "hello"
    samples = [r for r in records if r.get("type") == "sample"]
    assert samples[0]["counts"] == UPRIGHT
    assert samples[0]["zone"] == "Normal"
    assert "recv_ns" in samples[0]


def test_baseline_capture_flow(env):
    send_samples(env.conn, [(0, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    status_code, body = api_post(env.port, "/threshold/baseline")
    assert status_code == 200
    assert body["monitor"]["baseline_counts"] == UPRIGHT
    assert body["monitor"]["mode"] == "sensor_baseline"
    assert env.status()["monitor"]["baseline_counts"] == UPRIGHT
    # |560 - 513| = 47 > 36: out of zone under the captured baseline
    send_samples(env.conn, [(100, 560)])
    wait_until(lambda: env.status()["zone"] == "OutOfZone")
    send_samples(env.conn, [(200, UPRIGHT)])
    wait_until(lambda: env.status()["zone"] == "Safe")


def test_baseline_without_any_sample_conflicts(env):
    status_code, body = api_post(env.port, "/threshold/baseline")
    assert status_code == 409
    assert body["error"]["code"] == "conflict"


def test_zone_threshold_validation(env):
    send_samples(env.conn, [(0, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    status_code, body = api_post(env.port, "/threshold/zone", {})
    assert status_code == 400
    assert set(body["error"]["fields"]) == {"safe_low", "safe_high"}
    status_code, body = api_post(env.port, "/threshold/zone", {"safe_low": "x", "safe_high": 110})
    assert status_code == 400 and body["error"]["fields"] == ["safe_low"]
    status_code, body = api_post(env.port, "/threshold/zone", {"safe_low": 120, "safe_high": 100})
    assert status_code == 400
    status_code, body = api_post(env.port, "/threshold/zone", {"safe_low": 85, "safe_high": 115})
    assert status_code == 200
    assert env.status()["monitor"]["safe_low"] == 85


def test_threshold_conflicts_while_disconnected(env):
    env.conn.close()
    wait_until(lambda: not env.status()["connected"])
    assert api_post(env.port, "/threshold/zone", {"safe_low": 85, "safe_high": 115})[0] == 409
    assert api_post(env.port, "/threshold/baseline")[0] == 409


def test_session_lifecycle_and_log_endpoint(env):
    send_samples(env.conn, [(0, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    status_code, body = api_post(env.port, "/session/start")
    assert status_code == 200
    session_id = body["session_id"]
    assert api_post(env.port, "/session/start")[0] == 409
    send_samples(env.conn, [(50, UPRIGHT), (100, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 3)
    assert api_post(env.port, "/session/stop")[0] == 200
    assert api_post(env.port, "/session/stop")[0] == 409

    status_code, body = api_get(env.port, f"/session/log?session_id={session_id}")
    assert status_code == 200
    kinds = [r["kind"] for r in body["records"]]
    assert kinds.count("SessionStart") == 1
    assert kinds.count("SessionStop") == 1
    assert kinds.count("Sample") == 2

    assert api_get(env.port, "/session/log?session_id=s-nope")[0] == 404
    assert api_get(env.port, "/session/log")[0] == 400


def test_excursion_sends_vibrate_frame(tmp_path):
    env = Env(tmp_path, MonitorConfig(debounce_ms=500, vibrate_repeat_ms=10000))
    try:
        with StreamClient(env.port) as stream:
            send_samples(env.conn, [(t, LEANING) for t in range(0, 1500, 50)])
            stream.drain_until(lambda r: r.get("kind") == "ZoneExit")
        # the wire shows exactly one vibrate command
        env.conn.settimeout(5.0)
        decoder = StreamDecoder()
        frames = []
        while not frames:
            frames, _ = decoder.feed(env.conn.recv(4096))
        assert frames == [Vibrate(duration_ms=400)]
        wait_until(lambda: env.status()["counters"]["vibrates_sent"] == 1)
        env.service._log.sync()
        kinds = [r["kind"] for r in read_log(env.log_path).records]
        assert kinds.count("ZoneExit") == 1
        assert kinds.count("VibrateSent") == 1
    finally:
        env.close()


def test_device_restart_rebases_timestamps(env):
    send_samples(env.conn, [(0, UPRIGHT), (50, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 2)
    first_ts = env.status()["ts_ms"]
    env.conn.close()
    wait_until(lambda: not env.status()["connected"])
    new_conn = env.fake.accept()
    wait_until(lambda: env.status()["connected"])
    # device clock restarted at zero; service must keep engine time monotone
    send_samples(new_conn, [(0, UPRIGHT), (50, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 4)
    status = env.status()
    assert status["counters"]["ordering_errors"] == 0
    assert status["ts_ms"] > first_ts
    env.service._log.sync()
    kinds = [r["kind"] for r in read_log(env.log_path).records]
    assert "DeviceLost" in kinds and "DeviceRestored" in kinds


def test_sit_limit_over_service(tmp_path):
    env = Env(tmp_path, MonitorConfig(sit_limit_ms=5000))
    try:
        assert api_post(env.port, "/session/start")[0] == 200
        send_samples(env.conn, [(t, UPRIGHT) for t in range(0, 10000, 50)])
        wait_until(lambda: env.status()["counters"]["frames_sensor"] == 200)
        assert api_post(env.port, "/session/stop")[0] == 200
        env.service._log.sync()
        hits = [r for r in read_log(env.log_path).records if r["kind"] == "SitLimitReached"]
        assert len(hits) == 1
        assert abs(hits[0]["ts_ms"] - 5000) <= 50
        assert env.status()["sit_limit_fired"] is False  # flag is per-session
    finally:
        env.close()


def test_service_log_replays_clean(tmp_path):
    env = Env(tmp_path, MonitorConfig(debounce_ms=500, vibrate_repeat_ms=2000, sit_limit_ms=4000))
    try:
        assert api_post(env.port, "/session/start")[0] == 200
        trace = [(t, UPRIGHT) for t in range(0, 2000, 50)]
        trace += [(t, LEANING) for t in range(2000, 7000, 50)]
        trace += [(t, UPRIGHT) for t in range(7000, 8000, 50)]
        send_samples(env.conn, trace)
        wait_until(lambda: env.status()["counters"]["frames_sensor"] == len(trace))
        assert api_post(env.port, "/session/stop")[0] == 200
        env.service._log.sync()
        report = replay_log(env.log_path)
        assert report.ok, report.divergences[:3]
        assert report.samples_replayed == len(trace)
    finally:
        env.close()


def test_persistence_failure_degrades_not_dies(env):
    class ExplodingLog:
        def append(self, record):
            raise LogWriteError("disk on fire")

        def sync(self):
            pass

        def close(self):
            pass

    env.service._log = ExplodingLog()
    send_samples(env.conn, [(0, UPRIGHT)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    assert env.status()["persistence_failed"] is True
    assert env.status()["zone"] == "Normal"  # streaming continues


def test_unreachable_device_is_fatal(tmp_path):
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()  # nobody listening here now
    config = ServiceConfig(device=f"127.0.0.1:{port}", log_path=str(tmp_path / "log"))
    with pytest.raises(ServiceStartupError, match="unreachable"):
        MonitorService(config).start()


def test_unwritable_log_is_fatal(tmp_path):
    fake = FakeDevice()
    try:
        config = ServiceConfig(
            device=f"127.0.0.1:{fake.port}",
            log_path=str(tmp_path / "missing" / "dir" / "log"),
        )
        with pytest.raises(ServiceStartupError, match="log"):
            MonitorService(config).start()
    finally:
        fake.close()


def test_degraded_out_of_range_counts(env):
    # 100 counts is far below f(60 deg) = 484.96: clamped, degraded, OutOfZone.
    send_samples(env.conn, [(0, 100)])
    wait_until(lambda: env.status()["counters"]["frames_sensor"] == 1)
    status = env.status()
    assert status["zone"] == "OutOfZone"
    assert status["angle_deg"] == 60.0
    env.service._log.sync()
    sample = [r for r in read_log(env.log_path).records if r["kind"] == "Sample"][0]
    assert sample["degraded"] is True
