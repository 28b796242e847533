"""Append-only line-record log with bounded-loss durability.

Each append is a single whole-line write; the file is flushed to the OS on
every append and fsynced at least every 100 records or 1 second, whichever
comes first.  Reading tolerates a torn final line (crash mid-append): the
torn line is skipped and reported, everything before it replays exactly.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .events import decode_record, encode_record

FSYNC_EVERY_RECORDS = 100
FSYNC_INTERVAL_S = 1.0


class LogWriteError(OSError):
    """The log file could not be opened or appended."""


class EventLogWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self._fh = open(self.path, "ab")
        except OSError as exc:
            raise LogWriteError(f"cannot open session log {self.path}: {exc}") from exc
        self._since_sync = 0
        self._last_sync = time.monotonic()

    def append(self, record: dict[str, Any]) -> int:
        """Append one record; returns the byte offset the line starts at."""
        line = (encode_record(record) + "\n").encode("utf-8")
        try:
            position = self._fh.tell()
            self._fh.write(line)
            self._fh.flush()
        except OSError as exc:
            raise LogWriteError(f"append to {self.path} failed: {exc}") from exc
        self._since_sync += 1
        now = time.monotonic()
        if self._since_sync >= FSYNC_EVERY_RECORDS or now - self._last_sync >= FSYNC_INTERVAL_S:
            os.fsync(self._fh.fileno())
            self._since_sync = 0
            self._last_sync = now
        return position

    def sync(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._since_sync = 0
        self._last_sync = time.monotonic()

    def close(self) -> None:
        try:
            self.sync()
        finally:
            self._fh.close()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


@dataclass
class LogReadResult:
    records: list[dict[str, Any]]
    skipped: list[tuple[int, str]] = field(default_factory=list)  # (line number, reason)


def read_log(path: str | Path) -> LogReadResult:
    """Parse a log file, skipping and reporting torn or malformed lines."""
    result = LogReadResult(records=[])
    raw = Path(path).read_bytes()
    if not raw:
        return result
    lines = raw.split(b"\n")
    # A file ending mid-append has no trailing newline: its last split entry
    # is the torn tail rather than an empty string.
    torn_tail = lines[-1] != b""
    body = lines[:-1]
    for line_no, line in enumerate(body, 1):
        if not line.strip():
            continue
        try:
            result.records.append(decode_record(line.decode("utf-8")))
        except (ValueError, UnicodeDecodeError) as exc:
            result.skipped.append((line_no, f"unparseable record: {exc}"))
    if torn_tail:
        result.skipped.append((len(lines), "torn final line (no newline)"))
    return result
