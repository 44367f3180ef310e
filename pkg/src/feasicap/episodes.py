"""Channelized episode storage with per-frame feasibility metadata.

An episode holds four channels: the raw pose packets (image stripped), the
image blobs, the reserved hardware mask, and the feasibility log records.
Feasibility is metadata only; the recorded pose/image bytes are the wire
bytes, untouched.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import FeasicapError
from .mcapfile import CorruptFile, McapWriter, NdjsonWriter, read_mcap, read_ndjson

CH_POSE = "/iphone_pose"
CH_IMAGE = "/iphone_image"
CH_MASK = "/hardware_mask"
CH_FEASIBILITY = "/feasibility"

REQUIRED_CHANNELS = (CH_POSE, CH_IMAGE, CH_MASK, CH_FEASIBILITY)

# schema name + encoding per topic; SchemaMismatch fires when a known topic
# comes back with a different schema name
CHANNEL_SCHEMAS = {
    CH_POSE: ("feasicap.FramePacket", "custom", "custom"),
    CH_IMAGE: ("feasicap.ImageBlob", "custom", "custom"),
    CH_MASK: ("feasicap.HardwareMask", "custom", "custom"),
    CH_FEASIBILITY: ("feasicap.FeasibilityRecord", "jsonschema", "json"),
}

_FEASIBILITY_JSONSCHEMA = json.dumps(
    {
        "type": "object",
        "properties": {
            "frame_index": {"type": "integer"},
            "tracker_timestamp": {"type": "number"},
            "wall_clock": {"type": "number"},
            "state": {"enum": ["feasible", "warning", "infeasible"]},
            "raw_state": {"enum": ["feasible", "warning", "infeasible"]},
            "e": {"type": "number"},
            "r": {"type": "number"},
            "c": {"type": "boolean"},
            "w": {"type": "number"},
            "q": {"type": "array", "items": {"type": "number"}},
            "p": {"type": "array"},
            "compute_micros": {"type": "number"},
            "ik_jump": {"type": "boolean"},
        },
        "required": ["frame_index", "state", "e", "r", "c", "w"],
    }
).encode()


class SchemaMismatch(FeasicapError):
    """A required topic was stored with an unexpected schema."""


class MissingChannel(FeasicapError):
    """Episode lacks a channel the operation needs."""


class Message(NamedTuple):
    log_time: int  # ns
    sequence: int
    data: bytes


@dataclass
class Episode:
    id: str
    channels: dict = field(default_factory=dict)
    start_wall: float = 0.0
    end_wall: float = 0.0

    def channel(self, name: str) -> list:
        if name not in self.channels:
            raise MissingChannel(f"episode {self.id} has no {name} channel")
        return self.channels[name]

    def merged(self):
        """All messages across channels in global log-time order.

        Per-channel order is preserved for equal timestamps (stable merge).
        """
        names = sorted(self.channels)

        def tagged(idx, msgs):
            for k, m in enumerate(msgs):
                yield (m.log_time, idx, k, m)

        iters = [tagged(i, self.channels[n]) for i, n in enumerate(names)]
        for _, idx, _, m in heapq.merge(*iters):
            yield names[idx], m

    def frame_count(self) -> int:
        return len(self.channels.get(CH_POSE, ()))


class EpisodeWriter:
    """Streaming writer; one writer per episode, appends are sequential."""

    def __init__(self, path, episode_id: str, fmt: str | None = None):
        self.path = Path(path)
        self.episode_id = episode_id
        fmt = fmt or ("ndjson" if self.path.suffix == ".ndjson" else "mcap")
        self._fp = open(self.path, "wb")
        cls = NdjsonWriter if fmt == "ndjson" else McapWriter
        self._writer = cls(self._fp, profile="feasicap", library="feasicap-0.1")
        self._channel_ids = {}
        self._last_time = {}
        for topic in REQUIRED_CHANNELS:
            name, encoding, message_encoding = CHANNEL_SCHEMAS[topic]
            data = _FEASIBILITY_JSONSCHEMA if topic == CH_FEASIBILITY else b""
            sid = self._writer.add_schema(name, encoding, data)
            self._channel_ids[topic] = self._writer.add_channel(
                sid, topic, message_encoding, {"episode_id": episode_id}
            )
        self._closed = False

    def append(self, topic: str, log_time: int, sequence: int, data: bytes):
        if topic not in self._channel_ids:
            name, encoding, message_encoding = CHANNEL_SCHEMAS.get(
                topic, (f"feasicap.{topic.strip('/')}", "custom", "custom")
            )
            sid = self._writer.add_schema(name, encoding)
            self._channel_ids[topic] = self._writer.add_channel(
                sid, topic, message_encoding, {"episode_id": self.episode_id}
            )
        last = self._last_time.get(topic)
        if last is not None and log_time < last:
            raise ValueError(f"{topic}: log_time went backwards ({log_time} < {last})")
        self._last_time[topic] = log_time
        self._writer.add_message(self._channel_ids[topic], sequence, log_time, data)

    def close(self):
        if not self._closed:
            self._writer.finish()
            self._fp.close()
            self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_episode(episode: Episode, path, fmt: str | None = None):
    with EpisodeWriter(path, episode.id, fmt) as w:
        for topic in episode.channels:
            for m in episode.channels[topic]:
                w.append(topic, m.log_time, m.sequence, m.data)


def read_episode(path) -> Episode:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".ndjson":
        schemas, channels, messages = read_ndjson(data)
    else:
        schemas, channels, messages = read_mcap(data)

    episode_id = path.stem
    topic_of = {}
    for ch in channels.values():
        topic_of[ch.id] = ch.topic
        if ch.metadata.get("episode_id"):
            episode_id = ch.metadata["episode_id"]
        expected = CHANNEL_SCHEMAS.get(ch.topic)
        if expected is not None:
            schema = schemas.get(ch.schema_id)
            if schema is None or schema.name != expected[0]:
                raise SchemaMismatch(
                    f"{ch.topic}: schema {schema.name if schema else None!r}, "
                    f"expected {expected[0]!r}"
                )

    out: dict[str, list[Message]] = {t: [] for t in topic_of.values()}
    for m in messages:
        topic = topic_of.get(m.channel_id)
        if topic is None:
            raise CorruptFile(f"message references unknown channel {m.channel_id}")
        out[topic].append(Message(m.log_time, m.sequence, bytes(m.data)))

    walls = [m.log_time for msgs in out.values() for m in msgs]
    return Episode(
        id=episode_id,
        channels=out,
        start_wall=min(walls) / 1e9 if walls else 0.0,
        end_wall=max(walls) / 1e9 if walls else 0.0,
    )


@dataclass
class FeasibilityStats:
    total_frames: int
    counts: dict
    infeasible_ratio: float
    warning_ratio: float
    feasible_ratio: float
    longest_infeasible_run: int

    def to_json(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "counts": self.counts,
            "infeasible_ratio": self.infeasible_ratio,
            "warning_ratio": self.warning_ratio,
            "feasible_ratio": self.feasible_ratio,
            "longest_infeasible_run": self.longest_infeasible_run,
        }


def feasibility_records(episode: Episode) -> list[dict]:
    return [json.loads(m.data) for m in episode.channel(CH_FEASIBILITY)]


def compute_stats(episode: Episode) -> FeasibilityStats:
    """Counts over the emitted states in the /feasibility channel."""
    records = feasibility_records(episode)
    counts = {"feasible": 0, "warning": 0, "infeasible": 0}
    longest = run = 0
    for rec in records:
        state = rec["state"]
        counts[state] += 1
        run = run + 1 if state == "infeasible" else 0
        longest = max(longest, run)
    n = len(records)
    return FeasibilityStats(
        total_frames=n,
        counts=counts,
        infeasible_ratio=counts["infeasible"] / n if n else 0.0,
        warning_ratio=counts["warning"] / n if n else 0.0,
        feasible_ratio=counts["feasible"] / n if n else 0.0,
        longest_infeasible_run=longest,
    )


_SVG_COLORS = {"feasible": "#2e8b57", "warning": "#e6b800", "infeasible": "#cc2222"}


def export_timeline(episode: Episode, csv_path=None, svg_path=None) -> tuple[str, str]:
    """Per-frame timeline as CSV text and an SVG bar; optionally written out."""
    records = feasibility_records(episode)
    lines = ["frame,state,e,r,c,w"]
    for rec in records:
        lines.append(
            f"{rec['frame_index']},{rec['state']},{rec['e']:.9g},{rec['r']:.9g},"
            f"{int(rec['c'])},{rec['w']:.9g}"
        )
    csv_text = "\n".join(lines) + "\n"

    n = max(len(records), 1)
    cell = max(1.0, min(8.0, 960.0 / n))
    width = cell * len(records)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{max(width, 1):.0f}" '
        f'height="40" viewBox="0 0 {max(width, 1):.2f} 40">'
    ]
    for i, rec in enumerate(records):
        color = _SVG_COLORS[rec["state"]]
        parts.append(
            f'<rect x="{i * cell:.2f}" y="0" width="{cell:.2f}" height="40" fill="{color}"/>'
        )
    parts.append("</svg>")
    svg_text = "".join(parts) + "\n"

    if csv_path is not None:
        Path(csv_path).write_text(csv_text)
    if svg_path is not None:
        Path(svg_path).write_text(svg_text)
    return csv_text, svg_text


def validate_episode(episode: Episode) -> list[str]:
    """Invariant check: monotone per-channel timestamps, feasibility
    records referencing existing pose frames. Returns problem strings."""
    problems = []
    for topic, msgs in episode.channels.items():
        for a, b in zip(msgs, msgs[1:]):
            if b.log_time < a.log_time:
                problems.append(f"{topic}: log_time not monotone")
                break
    if CH_FEASIBILITY in episode.channels and CH_POSE in episode.channels:
        pose_seqs = {m.sequence for m in episode.channels[CH_POSE]}
        for rec in feasibility_records(episode):
            if rec["frame_index"] not in pose_seqs:
                problems.append(
                    f"feasibility record {rec['frame_index']} has no pose frame"
                )
    ratios = compute_stats(episode)
    total = ratios.infeasible_ratio + ratios.warning_ratio + ratios.feasible_ratio
    if ratios.total_frames and not math.isclose(total, 1.0, abs_tol=1e-12):
        problems.append("state ratios do not sum to 1")
    return problems
