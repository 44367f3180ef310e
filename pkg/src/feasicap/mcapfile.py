"""Self-contained writer/reader for the MCAP subset this package needs.

Covers header, schema, channel, message, data-end, and footer records in a
single unchunked data section — enough for standard MCAP tools to read the
episodes back. No compression, no chunk index, no summary section (footer
offsets are zero, which the format allows).

A newline-delimited JSON fallback (``.ndjson``) ships behind the same
record vocabulary for environments where binary containers are awkward.
"""
from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field

from .errors import FeasicapError

MCAP_MAGIC = b"\x89MCAP0\r\n"

OP_HEADER = 0x01
OP_FOOTER = 0x02
OP_SCHEMA = 0x03
OP_CHANNEL = 0x04
OP_MESSAGE = 0x05
OP_DATA_END = 0x0F


class CorruptFile(FeasicapError):
    """Container magic/framing is broken or the file is truncated."""


@dataclass
class Schema:
    id: int
    name: str
    encoding: str
    data: bytes = b""


@dataclass
class Channel:
    id: int
    schema_id: int
    topic: str
    message_encoding: str
    metadata: dict = field(default_factory=dict)


@dataclass
class Message:
    channel_id: int
    sequence: int
    log_time: int      # ns
    publish_time: int  # ns
    data: bytes


def _string(s: str) -> bytes:
    raw = s.encode()
    return struct.pack("<I", len(raw)) + raw


def _prefixed(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def _read_string(buf: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    return buf[off : off + n].decode(), off + n


def _record(op: int, payload: bytes) -> bytes:
    return struct.pack("<BQ", op, len(payload)) + payload


class McapWriter:
    def __init__(self, fp, profile: str = "", library: str = "feasicap"):
        self._fp = fp
        self._fp.write(MCAP_MAGIC)
        self._fp.write(_record(OP_HEADER, _string(profile) + _string(library)))
        self._next_schema = 1
        self._next_channel = 0
        self._finished = False

    def add_schema(self, name: str, encoding: str, data: bytes = b"") -> int:
        sid = self._next_schema
        self._next_schema += 1
        payload = struct.pack("<H", sid) + _string(name) + _string(encoding) + _prefixed(data)
        self._fp.write(_record(OP_SCHEMA, payload))
        return sid

    def add_channel(
        self, schema_id: int, topic: str, message_encoding: str, metadata: dict | None = None
    ) -> int:
        cid = self._next_channel
        self._next_channel += 1
        meta = b"".join(_string(k) + _string(v) for k, v in (metadata or {}).items())
        payload = (
            struct.pack("<HH", cid, schema_id)
            + _string(topic)
            + _string(message_encoding)
            + _prefixed(meta)
        )
        self._fp.write(_record(OP_CHANNEL, payload))
        return cid

    def add_message(
        self, channel_id: int, sequence: int, log_time: int, data: bytes,
        publish_time: int | None = None,
    ):
        payload = struct.pack(
            "<HIQQ",
            channel_id,
            sequence,
            log_time,
            publish_time if publish_time is not None else log_time,
        ) + data
        self._fp.write(_record(OP_MESSAGE, payload))

    def finish(self):
        if self._finished:
            return
        self._fp.write(_record(OP_DATA_END, struct.pack("<I", 0)))
        self._fp.write(_record(OP_FOOTER, struct.pack("<QQI", 0, 0, 0)))
        self._fp.write(MCAP_MAGIC)
        self._finished = True


def read_mcap(data: bytes):
    """Parse an MCAP byte string; returns (schemas, channels, messages).

    Unknown record opcodes are skipped, matching readers of the full format.
    """
    if len(data) < 2 * len(MCAP_MAGIC) or data[: len(MCAP_MAGIC)] != MCAP_MAGIC:
        raise CorruptFile("missing MCAP magic at start")
    if data[-len(MCAP_MAGIC) :] != MCAP_MAGIC:
        raise CorruptFile("missing MCAP magic at end")
    schemas: dict[int, Schema] = {}
    channels: dict[int, Channel] = {}
    messages: list[Message] = []
    off = len(MCAP_MAGIC)
    end = len(data) - len(MCAP_MAGIC)
    saw_footer = False
    while off < end:
        if off + 9 > end:
            raise CorruptFile("truncated record header")
        op, length = struct.unpack_from("<BQ", data, off)
        off += 9
        if off + length > end:
            raise CorruptFile(f"record 0x{op:02x} overruns file")
        payload = data[off : off + length]
        off += length
        try:
            if op == OP_SCHEMA:
                (sid,) = struct.unpack_from("<H", payload, 0)
                name, p = _read_string(payload, 2)
                encoding, p = _read_string(payload, p)
                (n,) = struct.unpack_from("<I", payload, p)
                schemas[sid] = Schema(sid, name, encoding, payload[p + 4 : p + 4 + n])
            elif op == OP_CHANNEL:
                cid, sid = struct.unpack_from("<HH", payload, 0)
                topic, p = _read_string(payload, 4)
                message_encoding, p = _read_string(payload, p)
                (n,) = struct.unpack_from("<I", payload, p)
                meta_buf = payload[p + 4 : p + 4 + n]
                metadata = {}
                q = 0
                while q < len(meta_buf):
                    k, q = _read_string(meta_buf, q)
                    v, q = _read_string(meta_buf, q)
                    metadata[k] = v
                channels[cid] = Channel(cid, sid, topic, message_encoding, metadata)
            elif op == OP_MESSAGE:
                cid, seq, log_time, publish_time = struct.unpack_from("<HIQQ", payload, 0)
                messages.append(Message(cid, seq, log_time, publish_time, payload[22:]))
            elif op == OP_FOOTER:
                saw_footer = True
            # header/data-end/unknown records carry nothing we need
        except (struct.error, UnicodeDecodeError) as exc:
            raise CorruptFile(f"bad record 0x{op:02x}: {exc}") from exc
    if not saw_footer:
        raise CorruptFile("no footer record")
    return schemas, channels, messages


class NdjsonWriter:
    """Fallback container: one JSON record per line, bytes as base64."""

    def __init__(self, fp, profile: str = "", library: str = "feasicap"):
        self._fp = fp
        self._write({"kind": "header", "profile": profile, "library": library})
        self._next_schema = 1
        self._next_channel = 0
        self._finished = False

    def _write(self, doc: dict):
        self._fp.write((json.dumps(doc, separators=(",", ":")) + "\n").encode())

    def add_schema(self, name: str, encoding: str, data: bytes = b"") -> int:
        sid = self._next_schema
        self._next_schema += 1
        self._write(
            {
                "kind": "schema",
                "id": sid,
                "name": name,
                "encoding": encoding,
                "data": base64.b64encode(data).decode(),
            }
        )
        return sid

    def add_channel(self, schema_id, topic, message_encoding, metadata=None) -> int:
        cid = self._next_channel
        self._next_channel += 1
        self._write(
            {
                "kind": "channel",
                "id": cid,
                "schema_id": schema_id,
                "topic": topic,
                "message_encoding": message_encoding,
                "metadata": metadata or {},
            }
        )
        return cid

    def add_message(self, channel_id, sequence, log_time, data, publish_time=None):
        self._write(
            {
                "kind": "message",
                "channel_id": channel_id,
                "sequence": sequence,
                "log_time": log_time,
                "publish_time": publish_time if publish_time is not None else log_time,
                "data": base64.b64encode(data).decode(),
            }
        )

    def finish(self):
        if not self._finished:
            self._write({"kind": "end"})
            self._finished = True


def read_ndjson(data: bytes):
    schemas: dict[int, Schema] = {}
    channels: dict[int, Channel] = {}
    messages: list[Message] = []
    saw_end = False
    for line in data.splitlines():
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptFile(f"bad ndjson line: {exc}") from exc
        kind = doc.get("kind")
        if kind == "schema":
            schemas[doc["id"]] = Schema(
                doc["id"], doc["name"], doc["encoding"], base64.b64decode(doc["data"])
            )
        elif kind == "channel":
            channels[doc["id"]] = Channel(
                doc["id"], doc["schema_id"], doc["topic"],
                doc["message_encoding"], doc.get("metadata", {}),
            )
        elif kind == "message":
            messages.append(
                Message(
                    doc["channel_id"], doc["sequence"], doc["log_time"],
                    doc["publish_time"], base64.b64decode(doc["data"]),
                )
            )
        elif kind == "end":
            saw_end = True
    if not saw_end:
        raise CorruptFile("ndjson file has no end record")
    return schemas, channels, messages
