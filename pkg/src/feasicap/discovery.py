"""LAN service discovery: DNS-SD over multicast DNS, plus a UDP beacon
fallback for networks that block mDNS.

The announcer answers PTR queries for ``_feasicap._tcp.local.`` with
PTR/SRV/TXT/A records (TXT keys: proto, http) and replies to JSON probe
datagrams on the beacon port. Both carry the same announcement payload.
"""
from __future__ import annotations

import errno
import json
import socket
import struct
import threading
import time
import uuid
from dataclasses import dataclass, field

from .errors import FeasicapError

SERVICE_TYPE = "_feasicap._tcp.local."
MDNS_GROUP = "224.0.0.251"
MDNS_PORT = 5353
DEFAULT_BEACON_PORT = 48653
PROBE = b"feasicap-probe-v1"

TYPE_A = 1
TYPE_PTR = 12
TYPE_TXT = 16
TYPE_SRV = 33
CLASS_IN = 1


class PortInUse(FeasicapError):
    """The requested port is already bound."""


class NoNetwork(FeasicapError):
    """No usable socket could be created."""


@dataclass
class ServiceAnnouncement:
    service_name: str = "feasicap"
    instance_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    stream_port: int = 0
    http_port: int = 0
    protocol_version: int = 1

    def to_payload(self) -> bytes:
        return json.dumps(
            {
                "service": SERVICE_TYPE,
                "name": self.service_name,
                "instance_id": self.instance_id,
                "stream_port": self.stream_port,
                "http_port": self.http_port,
                "proto": self.protocol_version,
            }
        ).encode()

    @staticmethod
    def from_payload(data: bytes) -> "ServiceAnnouncement | None":
        try:
            doc = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None
        if doc.get("service") != SERVICE_TYPE:
            return None
        return ServiceAnnouncement(
            service_name=doc.get("name", "feasicap"),
            instance_id=doc.get("instance_id", ""),
            stream_port=int(doc.get("stream_port", 0)),
            http_port=int(doc.get("http_port", 0)),
            protocol_version=int(doc.get("proto", 1)),
        )


# ---------------------------------------------------------------- DNS codec

def _encode_name(name: str) -> bytes:
    out = b""
    for label in name.rstrip(".").split("."):
        raw = label.encode()
        out += bytes([len(raw)]) + raw
    return out + b"\x00"


def _decode_name(buf: bytes, off: int) -> tuple[str, int]:
    labels = []
    jumped = False
    end = off
    hops = 0
    while True:
        if off >= len(buf):
            raise ValueError("name overruns packet")
        n = buf[off]
        if n == 0:
            if not jumped:
                end = off + 1
            break
        if n & 0xC0 == 0xC0:
            if off + 1 >= len(buf):
                raise ValueError("bad compression pointer")
            ptr = ((n & 0x3F) << 8) | buf[off + 1]
            if not jumped:
                end = off + 2
            off = ptr
            jumped = True
            hops += 1
            if hops > 32:
                raise ValueError("compression loop")
            continue
        if off + 1 + n > len(buf):
            raise ValueError("label overruns packet")
        labels.append(buf[off + 1 : off + 1 + n].decode("ascii", "replace"))
        off += 1 + n
    return ".".join(labels) + ".", end


def encode_query(service_type: str = SERVICE_TYPE, unicast: bool = True) -> bytes:
    header = struct.pack(">HHHHHH", 0, 0, 1, 0, 0, 0)
    qclass = CLASS_IN | (0x8000 if unicast else 0)
    return header + _encode_name(service_type) + struct.pack(">HH", TYPE_PTR, qclass)


def _rr(name: str, rtype: int, ttl: int, rdata: bytes) -> bytes:
    return (
        _encode_name(name)
        + struct.pack(">HHIH", rtype, CLASS_IN | 0x8000, ttl, len(rdata))
        + rdata
    )


def encode_response(ann: ServiceAnnouncement, host_ip: str, ttl: int = 120) -> bytes:
    instance = f"{ann.instance_id}.{SERVICE_TYPE}"
    host = f"{ann.instance_id}.local."
    txt_entries = [f"proto={ann.protocol_version}", f"http={ann.http_port}"]
    txt = b"".join(bytes([len(e)]) + e.encode() for e in txt_entries)
    answers = [
        _rr(SERVICE_TYPE, TYPE_PTR, ttl, _encode_name(instance)),
        _rr(
            instance,
            TYPE_SRV,
            ttl,
            struct.pack(">HHH", 0, 0, ann.stream_port) + _encode_name(host),
        ),
        _rr(instance, TYPE_TXT, ttl, txt),
        _rr(host, TYPE_A, ttl, socket.inet_aton(host_ip)),
    ]
    header = struct.pack(">HHHHHH", 0, 0x8400, 0, len(answers), 0, 0)
    return header + b"".join(answers)


def parse_packet(data: bytes):
    """Returns (questions, answers); answers as (name, type, rdata_view)."""
    if len(data) < 12:
        raise ValueError("short DNS packet")
    _, flags, qd, an, ns, ar = struct.unpack_from(">HHHHHH", data, 0)
    off = 12
    questions = []
    for _ in range(qd):
        name, off = _decode_name(data, off)
        if off + 4 > len(data):
            raise ValueError("truncated question")
        qtype, qclass = struct.unpack_from(">HH", data, off)
        off += 4
        questions.append((name, qtype, qclass))
    answers = []
    for _ in range(an + ns + ar):
        name, off = _decode_name(data, off)
        if off + 10 > len(data):
            raise ValueError("truncated record")
        rtype, rclass, ttl, rdlen = struct.unpack_from(">HHIH", data, off)
        off += 10
        if off + rdlen > len(data):
            raise ValueError("truncated rdata")
        answers.append((name, rtype, data[off : off + rdlen], off))
        off += rdlen
    return flags, questions, answers


def parse_announcement(data: bytes) -> ServiceAnnouncement | None:
    """Extract an announcement from an mDNS response packet, if ours."""
    try:
        flags, _, answers = parse_packet(data)
    except ValueError:
        return None
    if not flags & 0x8000:  # not a response
        return None
    instance = None
    srv_port = None
    txt: dict[str, str] = {}
    for name, rtype, rdata, rd_off in answers:
        if rtype == TYPE_PTR and name == SERVICE_TYPE:
            instance, _ = _decode_name(data, rd_off)
        elif rtype == TYPE_SRV:
            if len(rdata) >= 6:
                _, _, srv_port = struct.unpack_from(">HHH", rdata, 0)
        elif rtype == TYPE_TXT:
            p = 0
            while p < len(rdata):
                n = rdata[p]
                entry = rdata[p + 1 : p + 1 + n].decode("ascii", "replace")
                p += 1 + n
                if "=" in entry:
                    k, v = entry.split("=", 1)
                    txt[k] = v
    if instance is None or srv_port is None:
        return None
    instance_id = instance.split(".")[0]
    try:
        http_port = int(txt.get("http", "0"))
        proto = int(txt.get("proto", "1"))
    except ValueError:
        return None
    return ServiceAnnouncement(
        instance_id=instance_id,
        stream_port=srv_port,
        http_port=http_port,
        protocol_version=proto,
    )


# ------------------------------------------------------------- announcer

def _local_ip() -> str:
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        s.connect(("224.0.0.251", 1))
        return s.getsockname()[0]
    except OSError:
        return "127.0.0.1"
    finally:
        s.close()


class Announcer:
    """Answers mDNS PTR queries and beacon probes until closed."""

    def __init__(
        self,
        announcement: ServiceAnnouncement,
        beacon_port: int = DEFAULT_BEACON_PORT,
        enable_mdns: bool = True,
        enable_beacon: bool = True,
        host_ip: str | None = None,
    ):
        self.announcement = announcement
        self.host_ip = host_ip or _local_ip()
        self._stop = threading.Event()
        self._threads = []
        self._mdns_sock = None
        self._beacon_sock = None
        if not (enable_mdns or enable_beacon):
            raise ValueError("announcer needs at least one transport")

        if enable_beacon:
            try:
                sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                if hasattr(socket, "SO_REUSEPORT"):
                    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEPORT, 1)
                sock.bind(("", beacon_port))
            except OSError as exc:
                if exc.errno == errno.EADDRINUSE:
                    raise PortInUse(f"beacon port {beacon_port} in use") from exc
                raise NoNetwork(str(exc)) from exc
            sock.settimeout(0.2)
            self._beacon_sock = sock
            t = threading.Thread(target=self._beacon_loop, daemon=True)
            t.start()
            self._threads.append(t)

        if enable_mdns:
            try:
                sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                if hasattr(socket, "SO_REUSEPORT"):
                    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEPORT, 1)
                sock.bind(("", MDNS_PORT))
                mreq = struct.pack("4s4s", socket.inet_aton(MDNS_GROUP), socket.inet_aton("0.0.0.0"))
                sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, mreq)
                sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, 1)
                sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_LOOP, 1)
            except OSError as exc:
                if self._beacon_sock is None:
                    raise NoNetwork(f"mDNS unavailable: {exc}") from exc
                sock = None  # beacon still carries discovery
            if sock is not None:
                sock.settimeout(0.2)
                self._mdns_sock = sock
                t = threading.Thread(target=self._mdns_loop, daemon=True)
                t.start()
                self._threads.append(t)
                # one unsolicited announcement at startup
                try:
                    sock.sendto(
                        encode_response(self.announcement, self.host_ip),
                        (MDNS_GROUP, MDNS_PORT),
                    )
                except OSError:
                    pass

    def _beacon_loop(self):
        while not self._stop.is_set():
            try:
                data, addr = self._beacon_sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                return
            if data.startswith(PROBE):
                try:
                    self._beacon_sock.sendto(self.announcement.to_payload(), addr)
                except OSError:
                    pass

    def _mdns_loop(self):
        while not self._stop.is_set():
            try:
                data, addr = self._mdns_sock.recvfrom(4096)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                flags, questions, _ = parse_packet(data)
            except ValueError:
                continue
            if flags & 0x8000:
                continue  # a response, not a query
            for name, qtype, qclass in questions:
                if qtype == TYPE_PTR and name.lower() == SERVICE_TYPE:
                    reply = encode_response(self.announcement, self.host_ip)
                    dest = addr if qclass & 0x8000 else (MDNS_GROUP, MDNS_PORT)
                    try:
                        self._mdns_sock.sendto(reply, dest)
                    except OSError:
                        pass
                    break

    def close(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=1.0)
        for sock in (self._mdns_sock, self._beacon_sock):
            if sock is not None:
                sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def announce(
    announcement: ServiceAnnouncement,
    beacon_port: int = DEFAULT_BEACON_PORT,
    enable_mdns: bool = True,
    enable_beacon: bool = True,
    host_ip: str | None = None,
) -> Announcer:
    return Announcer(announcement, beacon_port, enable_mdns, enable_beacon, host_ip)


def browse(
    timeout: float = 1.0,
    beacon_port: int = DEFAULT_BEACON_PORT,
    enable_mdns: bool = True,
    enable_beacon: bool = True,
) -> list[ServiceAnnouncement]:
    """Collect distinct announcements visible on the LAN within timeout."""
    found: dict[str, ServiceAnnouncement] = {}
    socks = []

    if enable_beacon:
        try:
            b = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            b.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
            b.bind(("", 0))
            for dest in ("127.255.255.255", "<broadcast>", "127.0.0.1"):
                try:
                    b.sendto(PROBE, (dest, beacon_port))
                except OSError:
                    pass
            socks.append(("beacon", b))
        except OSError:
            pass

    if enable_mdns:
        try:
            m = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
            m.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            m.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, 1)
            m.bind(("", 0))
            m.sendto(encode_query(unicast=True), (MDNS_GROUP, MDNS_PORT))
            socks.append(("mdns", m))
        except OSError:
            pass

    if not socks:
        raise NoNetwork("no discovery socket could be created")

    deadline = time.monotonic() + timeout
    for _, s in socks:
        s.settimeout(0.05)
    while time.monotonic() < deadline:
        for kind, s in socks:
            try:
                data, _ = s.recvfrom(4096)
            except (socket.timeout, OSError):
                continue
            ann = (
                ServiceAnnouncement.from_payload(data)
                if kind == "beacon"
                else parse_announcement(data)
            )
            if ann is not None and ann.instance_id not in found:
                found[ann.instance_id] = ann
    for _, s in socks:
        s.close()
    return list(found.values())
