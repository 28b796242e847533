#!/usr/bin/env python3
"""Desk demo: simulator + monitor service + a console subscriber, one process.

Streams the bundled lean-excursion trajectory through the full pipeline and
prints every sample zone change and alert event as it happens, then replays
the session log to show the determinism check passing.

Usage: python scripts/demo_end_to_end.py [--pace]
"""

from __future__ import annotations

import argparse
import socket
import sys
import threading
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from sipo.api import ApiServer
from sipo.calibration import reference_model
from sipo.config import ServiceConfig
from sipo.device import DeviceRunner, TrajectorySpec, load_trajectory_csv
from sipo.engine import MonitorConfig
from sipo.replay import replay_log
from sipo.service import MonitorService
from sipo.transport import SocketTransport


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pace", action="store_true", help="run in real time (12 s)")
    args = parser.parse_args()

    waypoints = load_trajectory_csv(ROOT / "data" / "trajectories" / "slouch_cycles.csv")
    spec = TrajectorySpec(waypoints=waypoints, noise_sigma=0.5, sample_rate_hz=20.0, seed=7)

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    device_port = listener.getsockname()[1]

    log_path = ROOT / "demo-session.log"
    if log_path.exists():
        log_path.unlink()
    config = ServiceConfig(
        device=f"127.0.0.1:{device_port}",
        api_host="127.0.0.1",
        api_port=0,
        log_path=str(log_path),
        monitor=MonitorConfig(sit_limit_ms=8000),
    )

    report_box = {}

    def run_device():
        conn, _ = listener.accept()
        listener.close()
        runner = DeviceRunner(
            spec, reference_model(), SocketTransport(conn), pace=args.pace, linger_ms=1500
        )
        report_box["report"] = runner.run()

    device_thread = threading.Thread(target=run_device, daemon=True)
    device_thread.start()

    service = MonitorService(config)
    service.start()
    api = ApiServer(service, config.api_host, config.api_port)
    api.start()
    print(f"API listening on http://127.0.0.1:{api.port}  (GET /status, /stream)")

    queue = service.subscribe()
    session_id = service.start_session()
    print(f"session started: {session_id}")

    last_zone = None
    try:
        while device_thread.is_alive() or not queue.empty():
            try:
                record = queue.get(timeout=0.5)
            except Exception:
                continue
            if record.get("type") == "sample":
                if record["zone"] != last_zone:
                    print(f"[{record['ts_ms']:>6} ms] zone -> {record['zone']} "
                          f"(angle {record['angle_deg']:.1f} deg, {record['counts']} counts)")
                    last_zone = record["zone"]
            elif record.get("type") == "event":
                print(f"[{record['ts_ms']:>6} ms] EVENT {record['kind']}")
    except KeyboardInterrupt:
        pass

    service.stop_session()
    service._log.sync()
    report = report_box.get("report")
    if report is not None:
        print(f"device: {report.sensor_frames_sent} frames sent, "
              f"{report.vibrates_received} vibrate commands actuated")
    replay = replay_log(log_path)
    print(f"replay: {replay.samples_replayed} samples, "
          f"{len(replay.divergences)} divergences, ok={replay.ok}")
    service.stop()
    api.stop()
    print(f"session log kept at {log_path}")
    return 0 if replay.ok else 2


if __name__ == "__main__":
    sys.exit(main())
