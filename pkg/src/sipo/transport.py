"""Byte-stream transports binding the wire protocol to sockets or stdio."""

from __future__ import annotations

import select
import socket
import sys
from dataclasses import dataclass


class TransportError(OSError):
    """Transport could not be opened or used."""


@dataclass(frozen=True)
class Endpoint:
    """Parsed device/API endpoint: a host:port pair or the stdio sentinel."""

    host: str | None
    port: int | None

    @property
    def is_stdio(self) -> bool:
        return self.host is None

    def __str__(self) -> str:
        return "stdio" if self.is_stdio else f"{self.host}:{self.port}"


def parse_endpoint(text: str) -> Endpoint:
    if text.strip().lower() == "stdio":
        return Endpoint(host=None, port=None)
    host, sep, port_text = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must be host:port or 'stdio', got {text!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"endpoint port is not a number: {text!r}") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"endpoint port out of range: {text!r}")
    return Endpoint(host=host, port=port)


class SocketTransport:
    """Blocking stream-socket transport with poll support."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        try:
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass  # not a TCP socket (e.g. a socketpair in tests)

    def read(self, max_bytes: int = 4096, timeout: float | None = None) -> bytes | None:
        """Read up to max_bytes; b'' means closed, None means timed out."""
        if timeout is not None:
            ready, _, _ = select.select([self._sock], [], [], timeout)
            if not ready:
                return None
        try:
            return self._sock.recv(max_bytes)
        except (ConnectionResetError, BrokenPipeError, OSError) as exc:
            raise TransportError(f"socket read failed: {exc}") from exc

    def write(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except (ConnectionResetError, BrokenPipeError, OSError) as exc:
            raise TransportError(f"socket write failed: {exc}") from exc

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class StdioTransport:
    """Binary transport over this process's stdin/stdout."""

    def __init__(self) -> None:
        self._stdin = sys.stdin.buffer
        self._stdout = sys.stdout.buffer

    def read(self, max_bytes: int = 4096, timeout: float | None = None) -> bytes | None:
        if timeout is not None:
            ready, _, _ = select.select([self._stdin], [], [], timeout)
            if not ready:
                return None
        return self._stdin.read1(max_bytes)

    def write(self, data: bytes) -> None:
        self._stdout.write(data)
        self._stdout.flush()

    def close(self) -> None:
        pass


def listen_once(host: str, port: int, timeout: float | None = None) -> tuple[SocketTransport, int]:
    """Bind, accept exactly one peer, and return (transport, bound port)."""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind((host, port))
        server.listen(1)
        bound_port = server.getsockname()[1]
        server.settimeout(timeout)
        conn, _ = server.accept()
    except socket.timeout as exc:
        server.close()
        raise TransportError(f"no peer connected to {host}:{port}") from exc
    except OSError as exc:
        server.close()
        raise TransportError(f"cannot listen on {host}:{port}: {exc}") from exc
    server.close()
    conn.settimeout(None)
    return SocketTransport(conn), bound_port


def connect(host: str, port: int, timeout: float = 5.0) -> SocketTransport:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
    sock.settimeout(None)
    return SocketTransport(sock)
