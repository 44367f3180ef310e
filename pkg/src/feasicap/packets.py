"""Bit-exact frame packet codec.

Normative wire layout (little-endian, fixed field order):

    offset  size  field
    0       4     magic  b"FCP1"
    4       2     version u16 (currently 1)
    6       2     flags   u16 (bit 0: echo request)
    8       8     tracker_timestamp f64 seconds
    16      8     wall_clock        f64 seconds (unix)
    24      128   pose 16 x f64, 4x4 matrix, column-major
    152     4     image_len u32
    156     -     image bytes (JPEG blob, opaque)

The packet is self-delimiting, so the same layout frames the TCP stream.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FeasicapError

MAGIC = b"FCP1"
VERSION = 1
HEADER_LEN = 156
FLAG_ECHO = 0x0001

_HEADER = struct.Struct("<4sHHdd16dI")
assert _HEADER.size == HEADER_LEN

ACK_MAGIC = b"FCA1"
ACK_LEN = 20
_ACK = struct.Struct("<4sdd")


class BadMagic(FeasicapError):
    """Buffer does not start with the packet magic."""


class UnsupportedVersion(FeasicapError):
    """Packet version is newer than this codec."""


class TruncatedPacket(FeasicapError):
    """Buffer is shorter than the header or the declared image length."""


@dataclass
class FramePacket:
    tracker_timestamp: float
    wall_clock: float
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    image: bytes = b""
    flags: int = 0
    version: int = VERSION

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=float).reshape(4, 4)

    def __eq__(self, other):
        if not isinstance(other, FramePacket):
            return NotImplemented
        return (
            self.version == other.version
            and self.flags == other.flags
            and self.tracker_timestamp == other.tracker_timestamp
            and self.wall_clock == other.wall_clock
            and self.pose.tobytes() == other.pose.tobytes()
            and self.image == other.image
        )

    def without_image(self) -> "FramePacket":
        return FramePacket(
            self.tracker_timestamp, self.wall_clock, self.pose.copy(), b"",
            self.flags, self.version,
        )


def encode_frame_packet(packet: FramePacket) -> bytes:
    if not np.isfinite(packet.pose).all():
        raise ValueError("pose contains NaN/Inf")
    if np.abs(packet.pose[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 0.0:
        raise ValueError("pose bottom row must be (0, 0, 0, 1)")
    for name in ("tracker_timestamp", "wall_clock"):
        v = getattr(packet, name)
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError(f"{name} must be finite")
    header = _HEADER.pack(
        MAGIC,
        packet.version,
        packet.flags,
        packet.tracker_timestamp,
        packet.wall_clock,
        *packet.pose.flatten(order="F"),
        len(packet.image),
    )
    return header + packet.image


def decode_frame_packet(buf: bytes, offset: int = 0) -> tuple[FramePacket, int]:
    """Decode one packet at offset; returns (packet, bytes consumed)."""
    if len(buf) - offset < HEADER_LEN:
        raise TruncatedPacket(
            f"need {HEADER_LEN} header bytes, have {len(buf) - offset}"
        )
    fields = _HEADER.unpack_from(buf, offset)
    if fields[0] != MAGIC:
        raise BadMagic(f"bad magic {fields[0]!r}")
    version = fields[1]
    if version != VERSION:
        raise UnsupportedVersion(f"packet version {version}, codec supports {VERSION}")
    image_len = fields[-1]
    total = HEADER_LEN + image_len
    if len(buf) - offset < total:
        raise TruncatedPacket(
            f"image declares {image_len} bytes, {len(buf) - offset - HEADER_LEN} available"
        )
    pose = np.array(fields[5:21], dtype=float).reshape(4, 4, order="F")
    image = bytes(buf[offset + HEADER_LEN : offset + total])
    return (
        FramePacket(
            tracker_timestamp=fields[3],
            wall_clock=fields[4],
            pose=pose,
            image=image,
            flags=fields[2],
            version=version,
        ),
        total,
    )


def encode_ack(tracker_timestamp: float, wall_clock: float) -> bytes:
    return _ACK.pack(ACK_MAGIC, tracker_timestamp, wall_clock)


def decode_ack(buf: bytes) -> tuple[float, float]:
    if len(buf) < ACK_LEN:
        raise TruncatedPacket("ack needs 20 bytes")
    magic, ts, wc = _ACK.unpack_from(buf)
    if magic != ACK_MAGIC:
        raise BadMagic(f"bad ack magic {magic!r}")
    return ts, wc


class StreamDecoder:
    """Incremental decoder for a byte stream of concatenated packets."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes):
        """Append bytes; yields every complete packet now available."""
        self._buf.extend(data)
        while True:
            if len(self._buf) < HEADER_LEN:
                return
            try:
                packet, consumed = decode_frame_packet(bytes(self._buf))
            except TruncatedPacket:
                return
            del self._buf[:consumed]
            yield packet

    @property
    def pending(self) -> int:
        return len(self._buf)
