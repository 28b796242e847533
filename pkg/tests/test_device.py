import socket
import threading

import pytest

from sipo.calibration import eval_forward, invert, reference_model
from sipo.device import (
    GenerationError,
    SensorSample,
    TrajectoryError,
    TrajectorySpec,
    angle_at,
    load_trajectory_csv,
    run_device,
    sample_trajectory,
)
from sipo.protocol import (
    Ack,
    Heartbeat,
    SensorData,
    StreamDecoder,
    Vibrate,
    encode_frame,
)
from sipo.transport import SocketTransport

from oracles import exact_reference_slope

MODEL = reference_model()


def spec_const_90(duration_ms=5000, **kwargs):
    defaults = dict(noise_sigma=0.0, sample_rate_hz=20.0, seed=1)
    defaults.update(kwargs)
    return TrajectorySpec(waypoints=((0, 90.0), (duration_ms, 90.0)), **defaults)


# -- trajectory validation ---------------------------------------------------------


def test_spec_rejects_single_waypoint():
    with pytest.raises(TrajectoryError):
        TrajectorySpec(waypoints=((0, 90.0),))


def test_spec_rejects_non_increasing_times():
    with pytest.raises(TrajectoryError):
        TrajectorySpec(waypoints=((0, 90.0), (0, 95.0)))


def test_spec_rejects_bad_rate():
    with pytest.raises(TrajectoryError):
        TrajectorySpec(waypoints=((0, 90.0), (1000, 90.0)), sample_rate_hz=0)


def test_angle_interpolation_and_clamping():
    spec = TrajectorySpec(waypoints=((0, 90.0), (1000, 110.0)))
    assert angle_at(spec, 500) == pytest.approx(100.0)
    assert angle_at(spec, -50) == 90.0
    assert angle_at(spec, 2000) == 110.0


# -- sampling ----------------------------------------------------------------------


def test_constant_90_noiseless_gives_513():
    samples = sample_trajectory(spec_const_90(), MODEL)
    assert len(samples) == 100  # 5 s at 20 Hz, half-open
    assert all(s.value == 513 for s in samples)  # round(512.981)
    assert [s.ts_ms for s in samples] == list(range(0, 5000, 50))


def test_midpoint_interpolation_value():
    spec = TrajectorySpec(waypoints=((0, 90.0), (1000, 110.0)), noise_sigma=0.0, sample_rate_hz=2.0)
    samples = sample_trajectory(spec, MODEL)
    by_ts = {s.ts_ms: s.value for s in samples}
    assert by_ts[500] == 528  # round(eval_forward(100 deg)) = round(528.120)


def test_same_seed_gives_identical_samples():
    spec = TrajectorySpec(waypoints=((0, 90.0), (3000, 110.0)), noise_sigma=1.5, seed=99)
    assert sample_trajectory(spec, MODEL) == sample_trajectory(spec, MODEL)


def test_different_seed_differs():
    base = dict(waypoints=((0, 90.0), (3000, 110.0)), noise_sigma=1.5)
    a = sample_trajectory(TrajectorySpec(seed=1, **base), MODEL)
    b = sample_trajectory(TrajectorySpec(seed=2, **base), MODEL)
    assert a != b


def test_values_clamped_to_adc_range():
    spec = TrajectorySpec(waypoints=((0, 129.0), (2000, 129.0)), noise_sigma=400.0, seed=3)
    samples = sample_trajectory(spec, MODEL)
    assert all(0 <= s.value <= 1023 for s in samples)


def test_out_of_domain_angle_names_the_time():
    spec = TrajectorySpec(waypoints=((0, 90.0), (1000, 140.0)), noise_sigma=0.0)
    with pytest.raises(GenerationError, match="t="):
        sample_trajectory(spec, MODEL)


def test_noiseless_roundtrip_through_inversion():
    # Decoding the stream and inverting reproduces the script within
    # quantization: 0.5 counts / local slope, and ~0.02 deg at exactly 90.
    spec = TrajectorySpec(waypoints=((0, 80.0), (5000, 115.0)), noise_sigma=0.0, sample_rate_hz=20.0)
    for sample in sample_trajectory(spec, MODEL):
        scripted = angle_at(spec, sample.ts_ms)
        recovered = invert(MODEL, float(sample.value))
        bound = 0.5 / float(exact_reference_slope(scripted)) + 1e-6
        assert abs(recovered - scripted) <= bound
    const = sample_trajectory(spec_const_90(1000), MODEL)
    for sample in const:
        assert abs(invert(MODEL, float(sample.value)) - 90.0) <= 0.02


def test_trajectory_csv_loader(tmp_path):
    path = tmp_path / "traj.csv"
    path.write_text("time_ms,angle_deg\n0,90\n1000,110\n")
    assert load_trajectory_csv(path) == ((0, 90.0), (1000, 110.0))
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n0,90\n")
    with pytest.raises(TrajectoryError):
        load_trajectory_csv(bad)


# -- device loop -------------------------------------------------------------------


def _pair():
    a, b = socket.socketpair()
    return SocketTransport(a), SocketTransport(b)


def _collect_stream(transport, stop_on_close=True):
    decoder = StreamDecoder()
    frames = []
    while True:
        data = transport.read(4096, timeout=2.0)
        if data is None or data == b"":
            break
        got, _ = decoder.feed(data)
        frames.extend(got)
    tail, _ = decoder.finish()
    return frames + tail


def test_run_device_streams_expected_frames():
    device_end, host_end = _pair()
    report_box = {}

    def run():
        report_box["report"] = run_device(
            spec_const_90(), MODEL, device_end, pace=False, linger_ms=0
        )

    thread = threading.Thread(target=run)
    thread.start()
    frames = _collect_stream(host_end)
    thread.join(timeout=5)
    report = report_box["report"]

    sensor = [f for f in frames if isinstance(f, SensorData)]
    beats = [f for f in frames if isinstance(f, Heartbeat)]
    assert report.sensor_frames_sent == 100
    assert len(sensor) == 100
    assert report.heartbeats_sent == len(beats) == 4  # at 1, 2, 3, 4 s
    assert report.completed and report.error is None
    stamps = [f.ts_ms for f in sensor]
    assert stamps == list(range(0, 5000, 50))  # exact schedule under no-pace
    assert all(f.value == 513 for f in sensor)


def test_same_seed_identical_bytes_on_wire():
    captures = []
    for _ in range(2):
        device_end, host_end = _pair()
        chunks = []

        def run(dev=device_end):
            run_device(
                spec_const_90(2000, noise_sigma=2.0, seed=77), MODEL, dev, pace=False, linger_ms=0
            )

        thread = threading.Thread(target=run)
        thread.start()
        while True:
            data = host_end.read(4096, timeout=2.0)
            if data is None or data == b"":
                break
            chunks.append(data)
        thread.join(timeout=5)
        captures.append(b"".join(chunks))
    assert captures[0] == captures[1]


def test_vibrate_command_gets_ack_and_actuation(tmp_path):
    log_path = tmp_path / "actuation.log"
    device_end, host_end = _pair()
    report_box = {}

    def run():
        report_box["report"] = run_device(
            spec_const_90(1000),
            MODEL,
            device_end,
            pace=False,
            actuation_log_path=log_path,
            linger_ms=400,
        )

    thread = threading.Thread(target=run)
    thread.start()
    host_end.write(encode_frame(Vibrate(duration_ms=400)))
    frames = _collect_stream(host_end)
    thread.join(timeout=5)
    report = report_box["report"]

    assert report.vibrates_received == 1
    assert report.acks_sent == 1
    acks = [f for f in frames if isinstance(f, Ack)]
    assert acks == [Ack(acked_type=0x02)]
    assert len(report.actuations) == 1
    assert report.actuations[0]["duration_ms"] == 400
    lines = log_path.read_text().strip().splitlines()
    assert len(lines) == 1 and '"kind":"VibrateActuated"' in lines[0]


def test_peer_close_mid_run_is_clean():
    device_end, host_end = _pair()
    spec = spec_const_90(30_000)  # long trajectory, paced: we cut it short
    report_box = {}

    def run():
        report_box["report"] = run_device(spec, MODEL, device_end, pace=True, linger_ms=0)

    thread = threading.Thread(target=run)
    thread.start()
    # swallow a few frames, then hang up
    host_end.read(4096, timeout=2.0)
    host_end.close()
    thread.join(timeout=5)
    report = report_box["report"]
    assert report.error is None
    assert not report.completed
    assert report.sensor_frames_sent < 600


def test_malformed_inbound_is_counted_not_fatal():
    device_end, host_end = _pair()
    report_box = {}

    def run():
        report_box["report"] = run_device(
            spec_const_90(1000), MODEL, device_end, pace=False, linger_ms=300
        )

    thread = threading.Thread(target=run)
    thread.start()
    host_end.write(b"\xa5\x01\x06garbage!!")
    _collect_stream(host_end)
    thread.join(timeout=5)
    report = report_box["report"]
    assert report.completed
    assert report.inbound_errors >= 1
