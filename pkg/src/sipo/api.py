"""HTTP API and live stream for the monitor service.

Plain-threaded stdlib HTTP server: JSON request/response endpoints plus a
newline-delimited JSON stream (one record per sample/event) that both the
web UI and test harnesses consume.  Responses carry permissive CORS headers
so a browser-served UI can talk to the service from any origin.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any
from urllib.parse import parse_qs, urlparse

from .service import ApiConflict, ApiNotFound, ApiValidationError, MonitorService

STREAM_KEEPALIVE_S = 5.0


class ApiServer:
    """Owns the HTTP server thread; binds the handler to one MonitorService."""

    def __init__(self, service: MonitorService, host: str, port: int):
        self.service = service
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.service = service  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, name="sipo-api", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "sipo"

    @property
    def service(self) -> MonitorService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, format: str, *args) -> None:
        pass  # request logging stays out of the service's own output

    # -- plumbing ---------------------------------------------------------------

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_json(self, status: int, payload: dict[str, Any]) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, code: str, message: str, fields: list[str] | None = None) -> None:
        error: dict[str, Any] = {"code": code, "message": message}
        if fields:
            error["fields"] = fields
        self._send_json(status, {"error": error})

    def _read_body(self) -> dict[str, Any]:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiValidationError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise ApiValidationError("request body must be a JSON object")
        return body

    # -- methods ----------------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        url = urlparse(self.path)
        try:
            if url.path == "/status":
                self._send_json(200, self.service.status())
            elif url.path == "/stream":
                self._stream()
            elif url.path == "/session/log":
                params = parse_qs(url.query)
                session_ids = params.get("session_id")
                if not session_ids:
                    raise ApiValidationError("missing query parameter", fields=["session_id"])
                records = self.service.session_log(session_ids[0])
                self._send_json(200, {"session_id": session_ids[0], "records": records})
            elif self._maybe_static(url.path):
                pass
            else:
                self._send_error_json(404, "not_found", f"no such path: {url.path}")
        except ApiValidationError as exc:
            self._send_error_json(400, "validation", str(exc), exc.fields)
        except ApiNotFound as exc:
            self._send_error_json(404, "not_found", str(exc))
        except BrokenPipeError:
            pass

    def do_POST(self) -> None:
        url = urlparse(self.path)
        try:
            body = self._read_body()
            if url.path == "/session/start":
                session_id = self.service.start_session()
                self._send_json(200, {"session_id": session_id})
            elif url.path == "/session/stop":
                session_id = self.service.stop_session()
                self._send_json(200, {"session_id": session_id})
            elif url.path == "/threshold/baseline":
                config = self.service.capture_baseline()
                self._send_json(200, {"monitor": config.to_record()})
            elif url.path == "/threshold/zone":
                missing = [f for f in ("safe_low", "safe_high") if f not in body]
                if missing:
                    raise ApiValidationError("missing required fields", fields=missing)
                bad = [
                    f for f in ("safe_low", "safe_high")
                    if not isinstance(body[f], (int, float)) or isinstance(body[f], bool)
                ]
                if bad:
                    raise ApiValidationError("fields must be numbers", fields=bad)
                config = self.service.set_zone_thresholds(body["safe_low"], body["safe_high"])
                self._send_json(200, {"monitor": config.to_record()})
            else:
                self._send_error_json(404, "not_found", f"no such path: {url.path}")
        except ApiValidationError as exc:
            self._send_error_json(400, "validation", str(exc), exc.fields)
        except ApiConflict as exc:
            self._send_error_json(409, "conflict", str(exc))
        except ApiNotFound as exc:
            self._send_error_json(404, "not_found", str(exc))
        except BrokenPipeError:
            pass

    # -- streaming ----------------------------------------------------------------

    def _stream(self) -> None:
        q = self.service.subscribe()
        try:
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Connection", "close")
            self.end_headers()
            hello = {"type": "hello", "status": self.service.status()}
            self._write_line(hello)
            while True:
                try:
                    record = q.get(timeout=STREAM_KEEPALIVE_S)
                except queue.Empty:
                    self._write_line({"type": "keepalive"})
                    continue
                if record.get("type") == "shutdown":
                    break
                self._write_line(record)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.service.unsubscribe(q)
            self.close_connection = True

    def _write_line(self, record: dict[str, Any]) -> None:
        self.wfile.write((json.dumps(record) + "\n").encode("utf-8"))
        self.wfile.flush()

    # -- static UI ----------------------------------------------------------------

    def _maybe_static(self, path: str) -> bool:
        ui_dir = self.service.config.ui_dir
        if ui_dir is None:
            return False
        if path == "/":
            self.send_response(302)
            self._cors()
            self.send_header("Location", "/ui/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return True
        if not path.startswith("/ui"):
            return False
        rel = path[len("/ui"):].lstrip("/") or "index.html"
        root = Path(ui_dir).resolve()
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._send_error_json(404, "not_found", "path escapes the UI directory")
            return True
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_error_json(404, "not_found", f"no such UI file: {rel}")
            return True
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True
