"""Client side of the stream protocol plus thin HTTP helpers.

Stands in for the capture device: opens the persistent stream connection,
performs the version handshake, and sends frame packets (optionally
requesting echo acks for latency measurement).
"""
from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request

from .packets import ACK_LEN, FLAG_ECHO, VERSION, FramePacket, decode_ack, encode_frame_packet
from .server import HELLO_LEN, VersionMismatch, decode_hello, encode_hello


class StreamClient:
    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.sendall(encode_hello())
        hello = self._recv_exact(HELLO_LEN)
        server_version = decode_hello(hello)
        if server_version != VERSION:
            self.sock.close()
            raise VersionMismatch(f"server speaks version {server_version}")

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("stream closed during read")
            buf += chunk
        return buf

    def send_packet(self, packet: FramePacket):
        self.sock.sendall(encode_frame_packet(packet))

    def send_raw(self, data: bytes):
        self.sock.sendall(data)

    def send_with_echo(self, packet: FramePacket) -> tuple[float, float]:
        """Send one packet with the echo flag and wait for the ack."""
        packet.flags |= FLAG_ECHO
        self.sock.sendall(encode_frame_packet(packet))
        return decode_ack(self._recv_exact(ACK_LEN))

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def http_json(method: str, url: str, body: dict | None = None, timeout: float = 5.0):
    """One JSON request; returns (status, parsed body) without raising on 4xx."""
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if data is not None:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read() or b"null")
    except urllib.error.HTTPError as exc:
        payload = exc.read()
        try:
            return exc.code, json.loads(payload or b"null")
        except json.JSONDecodeError:
            return exc.code, {"error": payload.decode(errors="replace")}
