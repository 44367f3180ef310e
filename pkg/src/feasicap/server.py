"""Network service: persistent frame stream, HTTP control API, live state
feed, recording, and replay job execution.

One stream session (TCP socket or WebSocket bridge) drives the single
guidance session at a time. The feasibility path never blocks on
recording or slow feed subscribers: the recorder runs on its own thread
behind an unbounded queue, and the feed conflates to the latest snapshot
per subscriber.
"""
from __future__ import annotations

import base64
import errno
import hashlib
import json
import re
import socket
import struct
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .discovery import Announcer, PortInUse, ServiceAnnouncement
from .episodes import (
    CH_FEASIBILITY,
    CH_IMAGE,
    CH_MASK,
    CH_POSE,
    EpisodeWriter,
    MissingChannel,
    compute_stats,
    read_episode,
)
from .errors import FeasicapError
from .geometry import Pose
from .guidance import GuidanceConfig, GuidanceSession, TrackerFrame
from .kinematics import RobotModel
from .packets import (
    FLAG_ECHO,
    VERSION,
    BadMagic,
    StreamDecoder,
    UnsupportedVersion,
    encode_ack,
    encode_frame_packet,
)
from .replay import (
    DEFAULT_ROT_LIMIT,
    DEFAULT_TRANS_LIMIT,
    FrameRemap,
    SimulatedRobot,
    execute,
    resample_and_clamp,
    retarget,
)

HELLO_MAGIC = b"FCH1"
HELLO_LEN = 6
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class VersionMismatch(FeasicapError):
    """Stream handshake carried an incompatible protocol version."""


class PacketCorrupt(FeasicapError):
    """Stream framing broke mid-session; the connection is reset."""


def encode_hello(version: int = VERSION) -> bytes:
    return HELLO_MAGIC + struct.pack("<H", version)


def decode_hello(buf: bytes) -> int:
    if len(buf) < HELLO_LEN or buf[:4] != HELLO_MAGIC:
        raise PacketCorrupt(f"bad hello {buf[:4]!r}")
    return struct.unpack_from("<H", buf, 4)[0]


# ------------------------------------------------------------------ feed

class _Subscriber:
    def __init__(self):
        self.cond = threading.Condition()
        self.latest = None
        self.seq = 0

    def push(self, snapshot):
        with self.cond:
            self.latest = snapshot
            self.seq += 1
            self.cond.notify()

    def next(self, last_seq: int, timeout: float):
        with self.cond:
            if self.seq == last_seq:
                self.cond.wait(timeout)
            if self.seq == last_seq:
                return None, last_seq
            return self.latest, self.seq


class StateFeed:
    """Latest-value conflating fanout; publish never blocks."""

    def __init__(self, max_hz: float = 60.0):
        self.min_interval = 1.0 / max_hz
        self._subs: set[_Subscriber] = set()
        self._lock = threading.Lock()

    def publish(self, snapshot):
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.push(snapshot)

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber()
        with self._lock:
            self._subs.add(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber):
        with self._lock:
            self._subs.discard(sub)

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)


# --------------------------------------------------------------- recorder

class Recorder:
    """Single-writer episode recorder decoupled from the frame path."""

    def __init__(self, data_dir: Path, fmt: str = "mcap"):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.fmt = fmt
        self._queue: deque = deque()
        self._cond = threading.Condition()
        self._writer: EpisodeWriter | None = None
        self._episode_id: str | None = None
        self._frames = 0
        self._stop = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    @property
    def recording(self) -> bool:
        return self._episode_id is not None

    @property
    def episode_id(self) -> str | None:
        return self._episode_id

    def start_episode(self, episode_id: str | None = None) -> str:
        if self._episode_id is not None:
            raise RuntimeError("already recording")
        eid = episode_id or f"ep-{time.strftime('%Y%m%d-%H%M%S')}-{uuid.uuid4().hex[:6]}"
        suffix = ".ndjson" if self.fmt == "ndjson" else ".mcap"
        path = self.data_dir / f"{eid}{suffix}"
        with self._cond:
            self._queue.append(("open", str(path), eid))
            self._episode_id = eid
            self._frames = 0
            self._cond.notify()
        return eid

    def enqueue(self, topic: str, log_time: int, sequence: int, data: bytes):
        if self._episode_id is None:
            return
        with self._cond:
            self._queue.append(("msg", topic, log_time, sequence, data))
            if topic == CH_POSE:
                self._frames += 1
            self._cond.notify()

    def stop_episode(self) -> dict | None:
        if self._episode_id is None:
            return None
        eid, frames = self._episode_id, self._frames
        done = threading.Event()
        with self._cond:
            self._queue.append(("close", done))
            self._episode_id = None
            self._cond.notify()
        done.wait(timeout=10.0)
        return {"id": eid, "frames": frames}

    def close(self):
        self.stop_episode()
        with self._cond:
            self._stop = True
            self._cond.notify()
        self._thread.join(timeout=5.0)

    def _run(self):
        while True:
            with self._cond:
                while not self._queue and not self._stop:
                    self._cond.wait(0.2)
                if not self._queue and self._stop:
                    return
                item = self._queue.popleft()
            kind = item[0]
            if kind == "open":
                self._writer = EpisodeWriter(item[1], item[2], self.fmt)
            elif kind == "msg" and self._writer is not None:
                _, topic, log_time, sequence, data = item
                self._writer.append(topic, log_time, sequence, data)
            elif kind == "close":
                if self._writer is not None:
                    self._writer.close()
                    self._writer = None
                item[1].set()


# ----------------------------------------------------------- replay jobs

JOB_STATES = ("queued", "running", "done", "failed", "cancelled")


@dataclass
class ReplayJob:
    id: str
    episode_id: str
    speed_scale: float
    status: str = "queued"
    error: str | None = None
    report: dict | None = None
    cancel_requested: bool = False
    progress: float = 0.0  # executed fraction of the plan, 0..1

    def to_json(self) -> dict:
        doc = {
            "job": self.id,
            "episode_id": self.episode_id,
            "speed_scale": self.speed_scale,
            "status": self.status,
            "progress": round(self.progress, 4),
        }
        if self.error:
            doc["error"] = self.error
        if self.report is not None:
            doc["report"] = self.report
        return doc


class ReplayManager:
    """Single concurrent job against the simulated robot."""

    def __init__(self, model: RobotModel, store, remap: FrameRemap | None = None,
                 trans_limit: float = DEFAULT_TRANS_LIMIT,
                 rot_limit: float = DEFAULT_ROT_LIMIT,
                 realtime: bool = False):
        self.model = model
        self.store = store
        self.remap = remap or FrameRemap()
        self.trans_limit = trans_limit
        self.rot_limit = rot_limit
        self.realtime = realtime
        self._jobs: dict[str, ReplayJob] = {}
        self._lock = threading.Lock()
        self._active: str | None = None

    def start(self, episode_id: str, speed_scale: float = 1.0) -> ReplayJob:
        with self._lock:
            if self._active is not None:
                raise RuntimeError("replay already running")
            job = ReplayJob(uuid.uuid4().hex[:12], episode_id, speed_scale)
            self._jobs[job.id] = job
            self._active = job.id
        threading.Thread(target=self._run, args=(job,), daemon=True).start()
        return job

    def get(self, job_id: str) -> ReplayJob | None:
        with self._lock:
            return self._jobs.get(job_id)

    def cancel(self, job_id: str) -> ReplayJob | None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                return None
            if job.status in ("done", "failed", "cancelled"):
                raise RuntimeError(f"job already {job.status}")
            job.cancel_requested = True
            if job.status == "queued":
                job.status = "cancelled"
                self._active = None
        return job

    def _finish(self, job: ReplayJob, status: str):
        with self._lock:
            if job.status not in ("done", "failed", "cancelled"):
                job.status = status
            self._active = None

    def _run(self, job: ReplayJob):
        with self._lock:
            if job.status == "cancelled":
                self._active = None
                return
            job.status = "running"
        try:
            path = self.store.path_for(job.episode_id)
            episode = read_episode(path)
            from .packets import decode_frame_packet

            poses, ts = [], []
            for m in episode.channel(CH_POSE):
                packet, _ = decode_frame_packet(m.data)
                poses.append(Pose.from_matrix(packet.pose))
                ts.append(packet.tracker_timestamp)
            if not poses:
                raise FeasicapError("episode has no pose frames")
            ts0 = ts[0]
            ts = [(t - ts0) / job.speed_scale for t in ts]

            robot = SimulatedRobot(self.model)
            anchor = robot.tcp_pose
            commands = retarget(poses, anchor, self.remap)
            plan = resample_and_clamp(
                commands, ts, self.trans_limit, self.rot_limit, anchor=anchor
            )

            total = max(len(plan), 1)
            done_ticks = 0
            tick = plan.times[1] - plan.times[0] if len(plan) > 1 else 0.01

            def step_gate():
                nonlocal done_ticks
                job.progress = done_ticks / total
                done_ticks += 1
                if self.realtime:
                    time.sleep(tick)
                return job.cancel_requested

            report = execute(plan, robot, cancel=step_gate)
            job.progress = done_ticks / total
            job.report = report.to_json()
            self._finish(job, "cancelled" if job.cancel_requested else "done")
        except Exception as exc:  # job failures are status, not crashes
            job.error = str(exc)
            self._finish(job, "failed")


# ---------------------------------------------------------------- store

class EpisodeStore:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def list_ids(self) -> list[str]:
        ids = []
        for p in sorted(self.data_dir.iterdir()):
            if p.suffix in (".mcap", ".ndjson"):
                ids.append(p.stem)
        return ids

    def path_for(self, episode_id: str) -> Path:
        for suffix in (".mcap", ".ndjson"):
            p = self.data_dir / f"{episode_id}{suffix}"
            if p.exists():
                return p
        raise FileNotFoundError(episode_id)


# ---------------------------------------------------------------- server

@dataclass
class ServerConfig:
    model: RobotModel
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    host: str = "127.0.0.1"
    stream_port: int = 0
    http_port: int = 0
    beacon_port: int = 0          # 0 disables the beacon
    enable_mdns: bool = False
    data_dir: str = "episodes"
    episode_format: str = "mcap"
    autorecord: bool = True
    feed_hz: float = 60.0
    replay_realtime: bool = False
    replay_trans_limit: float = DEFAULT_TRANS_LIMIT
    replay_rot_limit: float = DEFAULT_ROT_LIMIT
    remap: FrameRemap = field(default_factory=FrameRemap)
    instance_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])


class FeasicapServer:
    """Hosts discovery, the frame stream, the control API, and the feed."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.session = GuidanceSession(config.model, config.guidance, retain=False)
        # streaming can start immediately; clients may re-calibrate over HTTP
        self.session.calibrate(Pose.identity(), Pose.identity())
        self.session.set_base_anchor(Pose.identity())
        self._session_lock = threading.Lock()

        self.feed = StateFeed(config.feed_hz)
        self.store = EpisodeStore(Path(config.data_dir))
        self.recorder = Recorder(Path(config.data_dir), config.episode_format)
        self.replays = ReplayManager(
            config.model,
            self.store,
            config.remap,
            config.replay_trans_limit,
            config.replay_rot_limit,
            config.replay_realtime,
        )
        self._stream_owner: str | None = None
        self._owner_lock = threading.Lock()
        self._stop = threading.Event()
        self._announcer: Announcer | None = None
        self.last_error: str | None = None

        try:
            self._listener = socket.create_server(
                (config.host, config.stream_port), reuse_port=False
            )
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"stream port {config.stream_port} in use") from exc
            raise
        self.stream_port = self._listener.getsockname()[1]

        handler = _make_handler(self)
        try:
            self._http = ThreadingHTTPServer((config.host, config.http_port), handler)
        except OSError as exc:
            self._listener.close()
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"http port {config.http_port} in use") from exc
            raise
        self.http_port = self._http.server_address[1]
        self._http.daemon_threads = True

        self._threads = [
            threading.Thread(target=self._accept_loop, daemon=True),
            threading.Thread(target=self._http.serve_forever, daemon=True),
        ]

    # -- lifecycle

    def start(self):
        for t in self._threads:
            t.start()
        ann = ServiceAnnouncement(
            instance_id=self.config.instance_id,
            stream_port=self.stream_port,
            http_port=self.http_port,
            protocol_version=VERSION,
        )
        if self.config.beacon_port or self.config.enable_mdns:
            self._announcer = Announcer(
                ann,
                beacon_port=self.config.beacon_port or 48653,
                enable_mdns=self.config.enable_mdns,
                enable_beacon=bool(self.config.beacon_port),
            )
        return self

    def close(self):
        self._stop.set()
        if self._announcer is not None:
            self._announcer.close()
        try:
            self._listener.close()
        except OSError:
            pass
        self._http.shutdown()
        self._http.server_close()
        self.recorder.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    # -- stream session over raw TCP

    def _accept_loop(self):
        self._listener.settimeout(0.25)
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(
                target=self._serve_stream, args=(conn, f"tcp:{addr}"), daemon=True
            ).start()

    def _claim_stream(self, owner: str) -> bool:
        with self._owner_lock:
            if self._stream_owner is not None:
                return False
            self._stream_owner = owner
            return True

    def _release_stream(self, owner: str):
        with self._owner_lock:
            if self._stream_owner == owner:
                self._stream_owner = None

    def _serve_stream(self, conn: socket.socket, owner: str):
        try:
            if not self._claim_stream(owner):
                conn.close()
                return
            conn.settimeout(10.0)
            hello = _recv_exact(conn, HELLO_LEN)
            if hello is None:
                return
            client_version = decode_hello(hello)
            conn.sendall(encode_hello())
            if client_version != VERSION:
                self.last_error = f"version mismatch: client {client_version}"
                return
            if self.config.autorecord and not self.recorder.recording:
                self.recorder.start_episode()
                opened_here = True
            else:
                opened_here = False
            decoder = StreamDecoder()
            conn.settimeout(0.5)
            while not self._stop.is_set():
                try:
                    data = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                try:
                    for packet in decoder.feed(data):
                        self.handle_packet(packet, conn)
                except (BadMagic, UnsupportedVersion) as exc:
                    self.last_error = f"stream corrupt: {exc}"
                    break  # reset the connection; prior frames stay recorded
                except FeasicapError as exc:
                    # bad frame content (lost tracking, non-monotone time):
                    # reset the session connection, keep what was recorded
                    self.last_error = f"frame rejected: {exc}"
                    break
            if opened_here:
                self.recorder.stop_episode()
        except (PacketCorrupt, VersionMismatch, OSError) as exc:
            self.last_error = str(exc)
        finally:
            self._release_stream(owner)
            try:
                conn.close()
            except OSError:
                pass

    def handle_packet(self, packet, reply_sock=None, ws=None):
        """Run one packet through guidance, recording, feed, and echo."""
        frame = TrackerFrame(
            device_pose=Pose.from_matrix(packet.pose),
            tracker_timestamp=packet.tracker_timestamp,
            wall_clock=packet.wall_clock,
            image=packet.image,
        )
        with self._session_lock:
            output = self.session.process_frame(frame)
        if self.recorder.recording:
            log_ns = int(round(packet.wall_clock * 1e9))
            seq = output.frame_index
            self.recorder.enqueue(
                CH_POSE, log_ns, seq, encode_frame_packet(packet.without_image())
            )
            self.recorder.enqueue(CH_IMAGE, log_ns, seq, packet.image)
            self.recorder.enqueue(CH_MASK, log_ns, seq, struct.pack("<H", seq & 0xFFFF))
            self.recorder.enqueue(
                CH_FEASIBILITY, log_ns, seq, json.dumps(output.to_record()).encode()
            )
        self.feed.publish(output)
        if packet.flags & FLAG_ECHO:
            ack = encode_ack(packet.tracker_timestamp, packet.wall_clock)
            if reply_sock is not None:
                try:
                    reply_sock.sendall(ack)
                except OSError:
                    pass
            elif ws is not None:
                ws.send_binary(ack)
        return output


def _recv_exact(conn: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


# ------------------------------------------------------------- websocket

class _WsConnection:
    """Minimal RFC6455 server-side connection over an existing socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()

    def recv_message(self):
        """Returns (opcode, payload) or None on close/EOF."""
        payload = b""
        opcode = None
        while True:
            head = _recv_exact(self.sock, 2)
            if head is None:
                return None
            b0, b1 = head
            fin = b0 & 0x80
            op = b0 & 0x0F
            masked = b1 & 0x80
            length = b1 & 0x7F
            if length == 126:
                ext = _recv_exact(self.sock, 2)
                if ext is None:
                    return None
                (length,) = struct.unpack(">H", ext)
            elif length == 127:
                ext = _recv_exact(self.sock, 8)
                if ext is None:
                    return None
                (length,) = struct.unpack(">Q", ext)
            mask = b""
            if masked:
                mask = _recv_exact(self.sock, 4)
                if mask is None:
                    return None
            data = _recv_exact(self.sock, length) if length else b""
            if data is None:
                return None
            if masked:
                data = bytes(c ^ mask[i % 4] for i, c in enumerate(data))
            if op == 0x8:  # close
                return None
            if op == 0x9:  # ping -> pong
                self._send_frame(0xA, data)
                continue
            if op == 0xA:  # pong
                continue
            if op in (0x1, 0x2):
                opcode = op
            payload += data
            if fin:
                return opcode, payload

    def _send_frame(self, opcode: int, payload: bytes):
        header = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header += bytes([n])
        elif n < 65536:
            header += bytes([126]) + struct.pack(">H", n)
        else:
            header += bytes([127]) + struct.pack(">Q", n)
        with self._send_lock:
            self.sock.sendall(header + payload)

    def send_binary(self, payload: bytes):
        self._send_frame(0x2, payload)

    def send_text(self, text: str):
        self._send_frame(0x1, text.encode())


# ------------------------------------------------------------- HTTP API

def _parse_pose(doc, key) -> Pose:
    m = np.asarray(doc[key], dtype=float)
    pose = Pose.from_matrix(m)
    if not pose.is_rigid(1e-6):
        raise ValueError(f"{key} is not a rigid transform")
    return pose


def _make_handler(server: FeasicapServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):
            pass

        # -- helpers

        def _json(self, code: int, doc):
            body = json.dumps(doc).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str):
            self._json(code, {"error": message})

        def _body(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError:
                return None
            return doc if isinstance(doc, dict) else None

        # -- routes

        def do_GET(self):
            path = self.path.split("?")[0]
            if path == "/episodes":
                return self._json(200, server.store.list_ids())
            m = re.fullmatch(r"/episodes/([^/]+)/stats", path)
            if m:
                return self._episode_stats(m.group(1))
            m = re.fullmatch(r"/replay/([^/]+)", path)
            if m:
                job = server.replays.get(m.group(1))
                if job is None:
                    return self._error(404, "unknown job")
                return self._json(200, job.to_json())
            if path == "/session":
                return self._session_status()
            if path == "/state/feed":
                return self._sse_feed()
            if path == "/stream/ws":
                return self._websocket()
            return self._error(404, "unknown path")

        def do_POST(self):
            path = self.path.split("?")[0]
            doc = self._body()
            if doc is None:
                return self._error(400, "malformed JSON body")
            if path == "/replay":
                return self._start_replay(doc)
            if path == "/session/clutch":
                if "engaged" not in doc or not isinstance(doc["engaged"], bool):
                    return self._error(400, "body needs boolean 'engaged'")
                with server._session_lock:
                    state = server.session.set_clutch(doc["engaged"])
                return self._json(200, {"engaged": state.engaged})
            if path == "/session/calibrate":
                try:
                    device = (
                        _parse_pose(doc, "device_pose")
                        if "device_pose" in doc
                        else Pose.identity()
                    )
                    desired = (
                        _parse_pose(doc, "desired_tcp_pose")
                        if "desired_tcp_pose" in doc
                        else Pose.identity()
                    )
                    with server._session_lock:
                        cal = server.session.calibrate(device, desired)
                except (ValueError, KeyError) as exc:
                    return self._error(400, str(exc))
                return self._json(200, {"cam_to_tcp": cal.cam_to_tcp.as_matrix().tolist()})
            if path == "/session/anchor":
                try:
                    pose = _parse_pose(doc, "pose") if "pose" in doc else Pose.identity()
                except ValueError as exc:
                    return self._error(400, str(exc))
                with server._session_lock:
                    server.session.set_base_anchor(pose)
                return self._json(200, {"base_pose": pose.as_matrix().tolist()})
            if path == "/record/start":
                if server.recorder.recording:
                    return self._error(409, "already recording")
                eid = server.recorder.start_episode(doc.get("episode_id"))
                return self._json(200, {"id": eid})
            if path == "/record/stop":
                info = server.recorder.stop_episode()
                if info is None:
                    return self._error(409, "not recording")
                return self._json(200, info)
            return self._error(404, "unknown path")

        def do_DELETE(self):
            m = re.fullmatch(r"/replay/([^/]+)", self.path.split("?")[0])
            if m:
                try:
                    job = server.replays.cancel(m.group(1))
                except RuntimeError as exc:
                    return self._error(409, str(exc))
                if job is None:
                    return self._error(404, "unknown job")
                return self._json(200, job.to_json())
            return self._error(404, "unknown path")

        # -- route bodies

        def _episode_stats(self, episode_id: str):
            try:
                path = server.store.path_for(episode_id)
            except FileNotFoundError:
                return self._error(404, "unknown episode")
            try:
                stats = compute_stats(read_episode(path))
            except MissingChannel as exc:
                return self._error(404, str(exc))
            return self._json(200, stats.to_json())

        def _start_replay(self, doc):
            episode_id = doc.get("episode_id")
            if not isinstance(episode_id, str):
                return self._error(400, "body needs string 'episode_id'")
            speed = doc.get("speed_scale", 1.0)
            if not isinstance(speed, (int, float)) or speed <= 0:
                return self._error(400, "'speed_scale' must be > 0")
            try:
                server.store.path_for(episode_id)
            except FileNotFoundError:
                return self._error(404, "unknown episode")
            try:
                job = server.replays.start(episode_id, float(speed))
            except RuntimeError:
                return self._error(409, "replay already running")
            return self._json(202, job.to_json())

        def _session_status(self):
            with server._session_lock:
                s = server.session
                doc = {
                    "configured": s.configured,
                    "clutch_engaged": s.clutch.engaged,
                    "frame_index": s.frame_index,
                    "recording": server.recorder.recording,
                    "episode_id": server.recorder.episode_id,
                    "dof": s.model.dof,
                    "stream_port": server.stream_port,
                }
            return self._json(200, doc)

        def _sse_feed(self):
            full = "full=1" in (self.path.split("?", 1) + [""])[1]
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            sub = server.feed.subscribe()
            last_seq = 0
            last_sent = 0.0
            try:
                while not server._stop.is_set():
                    snapshot, last_seq = sub.next(last_seq, timeout=0.5)
                    if snapshot is None:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    wait = server.feed.min_interval - (time.monotonic() - last_sent)
                    if wait > 0:
                        time.sleep(wait)
                    body = snapshot.to_json(include_link_poses=full)
                    self.wfile.write(b"data: " + body.encode() + b"\n\n")
                    self.wfile.flush()
                    last_sent = time.monotonic()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                server.feed.unsubscribe(sub)
            self.close_connection = True

        def _websocket(self):
            key = self.headers.get("Sec-WebSocket-Key")
            if (
                self.headers.get("Upgrade", "").lower() != "websocket"
                or key is None
            ):
                return self._error(400, "expected websocket upgrade")
            accept = base64.b64encode(
                hashlib.sha1((key + _WS_GUID).encode()).digest()
            ).decode()
            self.send_response(101, "Switching Protocols")
            self.send_header("Upgrade", "websocket")
            self.send_header("Connection", "Upgrade")
            self.send_header("Sec-WebSocket-Accept", accept)
            self.end_headers()
            self.wfile.flush()

            owner = f"ws:{self.client_address}"
            ws = _WsConnection(self.connection)
            if not server._claim_stream(owner):
                try:
                    ws._send_frame(0x8, struct.pack(">H", 1013))  # try again later
                except OSError:
                    pass
                self.close_connection = True
                return
            decoder = StreamDecoder()
            try:
                while not server._stop.is_set():
                    msg = ws.recv_message()
                    if msg is None:
                        break
                    opcode, payload = msg
                    if opcode != 0x2:
                        continue
                    try:
                        for packet in decoder.feed(payload):
                            server.handle_packet(packet, ws=ws)
                    except (BadMagic, UnsupportedVersion) as exc:
                        server.last_error = f"ws stream corrupt: {exc}"
                        break
            except (OSError, ConnectionResetError):
                pass
            finally:
                server._release_stream(owner)
            self.close_connection = True

    return Handler
