"""Shared harness bits for exercising the live monitor service in-process."""

from __future__ import annotations

import json
import socket
import time
from http.client import HTTPConnection

from sipo.protocol import SensorData, encode_frame


class FakeDevice:
    """Test-side stand-in for the simulator: listens, then speaks frames."""

    def __init__(self):
        self.server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.server.bind(("127.0.0.1", 0))
        self.server.listen(2)
        self.port = self.server.getsockname()[1]
        self.conns: list[socket.socket] = []

    def accept(self, timeout: float = 5.0) -> socket.socket:
        self.server.settimeout(timeout)
        conn, _ = self.server.accept()
        conn.settimeout(5.0)
        self.conns.append(conn)
        return conn

    def close(self) -> None:
        for conn in self.conns:
            try:
                conn.close()
            except OSError:
                pass
        self.server.close()


def send_samples(conn: socket.socket, ts_values: list[tuple[int, int]]) -> None:
    blob = b"".join(encode_frame(SensorData(ts_ms=ts, value=v)) for ts, v in ts_values)
    conn.sendall(blob)


def api_get(port: int, path: str) -> tuple[int, dict]:
    conn = HTTPConnection("127.0.0.1", port, timeout=5)
    try:
        conn.request("GET", path)
        response = conn.getresponse()
        return response.status, json.loads(response.read() or b"{}")
    finally:
        conn.close()


def api_post(port: int, path: str, body: dict | None = None) -> tuple[int, dict]:
    conn = HTTPConnection("127.0.0.1", port, timeout=5)
    try:
        payload = json.dumps(body or {}).encode()
        conn.request("POST", path, body=payload, headers={"Content-Type": "application/json"})
        response = conn.getresponse()
        return response.status, json.loads(response.read() or b"{}")
    finally:
        conn.close()


class StreamClient:
    """Line reader over the NDJSON stream endpoint."""

    def __init__(self, port: int):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.sock.sendall(b"GET /stream HTTP/1.1\r\nHost: test\r\n\r\n")
        self.fh = self.sock.makefile("rb")
        status = self.fh.readline()
        assert b"200" in status, status
        while True:
            line = self.fh.readline()
            if line in (b"\r\n", b"", b"\n"):
                break

    def next_record(self) -> dict:
        while True:
            line = self.fh.readline()
            if not line:
                raise EOFError("stream closed")
            record = json.loads(line)
            if record.get("type") != "keepalive":
                return record

    def drain_until(self, predicate, limit: int = 500) -> list[dict]:
        """Collect records until predicate(record) is true; returns all seen."""
        seen = []
        for _ in range(limit):
            record = self.next_record()
            seen.append(record)
            if predicate(record):
                return seen
        raise AssertionError(f"predicate never satisfied in {limit} records")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def wait_until(predicate, timeout: float = 5.0, interval: float = 0.02):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval)
    raise AssertionError("condition not reached in time")
