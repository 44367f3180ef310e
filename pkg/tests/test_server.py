import http.client
import json
import socket
import struct
import threading
import time

import numpy as np
import pytest

from feasicap.client import StreamClient, http_json
from feasicap.episodes import CH_FEASIBILITY, CH_IMAGE, CH_POSE, read_episode
from feasicap.geometry import Pose
from feasicap.kinematics import forward_kinematics
from feasicap.packets import FramePacket, encode_frame_packet
from feasicap.server import (
    FeasicapServer,
    ServerConfig,
    StateFeed,
    VersionMismatch,
    encode_hello,
)


@pytest.fixture
def server(seven_dof, tmp_path):
    config = ServerConfig(model=seven_dof, data_dir=str(tmp_path / "eps"))
    with FeasicapServer(config) as srv:
        yield srv


def reachable_pose(model, k=0):
    q = np.array([0.0, 0.7, 0.0, 1.2, 0.0, 0.6, 0.0]) + 0.01 * np.sin(k / 10.0)
    return forward_kinematics(model, q).ee_pose


def make_packet(model, k, image=b""):
    return FramePacket(
        k / 60.0, 1.7e9 + k / 60.0, reachable_pose(model, k).as_matrix(), image
    )


def url(server, path):
    return f"http://127.0.0.1:{server.http_port}{path}"


class TestStreamSession:
    def test_hundred_packets_in_order_recorded(self, server, seven_dof):
        sent = []
        with StreamClient("127.0.0.1", server.stream_port) as client:
            for k in range(100):
                p = make_packet(seven_dof, k, b"img%03d" % k)
                client.send_packet(p)
                sent.append(p)
        deadline = time.time() + 5
        while server.recorder.recording and time.time() < deadline:
            time.sleep(0.05)
        ids = server.store.list_ids()
        assert len(ids) == 1
        ep = read_episode(server.store.path_for(ids[0]))
        assert len(ep.channels[CH_POSE]) == 100
        for k, (msg, p) in enumerate(zip(ep.channels[CH_POSE], sent)):
            assert msg.sequence == k
            assert msg.data == encode_frame_packet(p.without_image())
        for msg, p in zip(ep.channels[CH_IMAGE], sent):
            assert msg.data == p.image
        assert len(ep.channels[CH_FEASIBILITY]) == 100

    def test_corrupt_byte_resets_but_keeps_prior_frames(self, server, seven_dof):
        with StreamClient("127.0.0.1", server.stream_port) as client:
            for k in range(50):
                client.send_packet(make_packet(seven_dof, k))
            client.send_raw(b"\xde\xad\xbe\xef" + b"\x00" * 160)
            # server must reset the connection
            client.sock.settimeout(2.0)
            assert client.sock.recv(64) == b""
        deadline = time.time() + 5
        while server.recorder.recording and time.time() < deadline:
            time.sleep(0.05)
        ids = server.store.list_ids()
        ep = read_episode(server.store.path_for(ids[0]))
        assert len(ep.channels[CH_POSE]) == 50
        assert "corrupt" in (server.last_error or "")

    def test_version_mismatch_rejected(self, server):
        sock = socket.create_connection(("127.0.0.1", server.stream_port), timeout=2)
        sock.sendall(b"FCH1" + struct.pack("<H", 99))
        sock.recv(6)  # server hello
        # server closes after answering with its own version
        sock.settimeout(2.0)
        assert sock.recv(16) == b""
        sock.close()

    def test_second_stream_refused_while_active(self, server, seven_dof):
        with StreamClient("127.0.0.1", server.stream_port) as c1:
            c1.send_packet(make_packet(seven_dof, 0))
            time.sleep(0.1)
            s2 = socket.create_connection(("127.0.0.1", server.stream_port), timeout=2)
            s2.settimeout(2.0)
            try:
                s2.sendall(encode_hello())
                refused = s2.recv(16) == b""
            except (ConnectionResetError, BrokenPipeError):
                refused = True
            assert refused
            s2.close()

    def test_echo_ack(self, server, seven_dof):
        with StreamClient("127.0.0.1", server.stream_port) as client:
            p = make_packet(seven_dof, 0)
            ts, wc = client.send_with_echo(p)
            assert ts == p.tracker_timestamp
            assert wc == p.wall_clock


class TestControlApi:
    def test_episodes_empty_list(self, server):
        code, body = http_json("GET", url(server, "/episodes"))
        assert code == 200
        assert body == []

    def test_unknown_paths_and_bodies(self, server):
        assert http_json("GET", url(server, "/nope"))[0] == 404
        assert http_json("GET", url(server, "/episodes/zz/stats"))[0] == 404
        assert http_json("GET", url(server, "/replay/zz"))[0] == 404
        assert http_json("POST", url(server, "/replay"), {"speed_scale": 1.0})[0] == 400
        conn = http.client.HTTPConnection("127.0.0.1", server.http_port, timeout=5)
        conn.request("POST", "/replay", b"{not json", {"Content-Type": "application/json"})
        assert conn.getresponse().status == 400
        conn.close()

    def _record_episode(self, server, seven_dof, frames=30):
        with StreamClient("127.0.0.1", server.stream_port) as client:
            for k in range(frames):
                client.send_packet(make_packet(seven_dof, k))
        deadline = time.time() + 5
        while server.recorder.recording and time.time() < deadline:
            time.sleep(0.05)
        return server.store.list_ids()[-1]

    def test_replay_job_state_machine(self, server, seven_dof):
        eid = self._record_episode(server, seven_dof)
        code, listing = http_json("GET", url(server, "/episodes"))
        assert eid in listing
        code, stats = http_json("GET", url(server, f"/episodes/{eid}/stats"))
        assert code == 200 and stats["total_frames"] == 30

        code, job = http_json("POST", url(server, "/replay"), {"episode_id": eid})
        assert code == 202
        seen = {job["status"]}
        deadline = time.time() + 30
        while time.time() < deadline:
            code, job = http_json("GET", url(server, f"/replay/{job['job']}"))
            seen.add(job["status"])
            if job["status"] in ("done", "failed", "cancelled"):
                break
            time.sleep(0.02)
        assert job["status"] == "done"
        assert seen <= {"queued", "running", "done"}
        assert "report" in job and "success" in job["report"]
        # terminal jobs cannot be cancelled
        assert http_json("DELETE", url(server, f"/replay/{job['job']}"))[0] == 409

    def test_second_replay_conflicts(self, server, seven_dof):
        eid = self._record_episode(server, seven_dof, frames=200)
        code, job = http_json(
            "POST", url(server, "/replay"), {"episode_id": eid, "speed_scale": 0.25}
        )
        assert code == 202
        code2, body2 = http_json("POST", url(server, "/replay"), {"episode_id": eid})
        assert code2 == 409
        code3, cancelled = http_json("DELETE", url(server, f"/replay/{job['job']}"))
        assert code3 == 200
        deadline = time.time() + 10
        while time.time() < deadline:
            _, job = http_json("GET", url(server, f"/replay/{job['job']}"))
            if job["status"] in ("done", "cancelled", "failed"):
                break
            time.sleep(0.02)
        assert job["status"] in ("cancelled", "done")

    def test_session_endpoints(self, server):
        code, status = http_json("GET", url(server, "/session"))
        assert code == 200 and status["configured"] and status["clutch_engaged"]
        code, body = http_json("POST", url(server, "/session/clutch"), {"engaged": False})
        assert code == 200 and body["engaged"] is False
        assert http_json("POST", url(server, "/session/clutch"), {})[0] == 400
        pose = Pose.identity().as_matrix().tolist()
        code, body = http_json(
            "POST",
            url(server, "/session/calibrate"),
            {"device_pose": pose, "desired_tcp_pose": pose},
        )
        assert code == 200
        code, body = http_json("POST", url(server, "/session/anchor"), {"pose": pose})
        assert code == 200

    def test_record_endpoints(self, server, seven_dof):
        code, body = http_json("POST", url(server, "/record/start"), {"episode_id": "manual-1"})
        assert code == 200 and body["id"] == "manual-1"
        assert http_json("POST", url(server, "/record/start"), {})[0] == 409
        code, body = http_json("POST", url(server, "/record/stop"), {})
        assert code == 200 and body["id"] == "manual-1"
        assert http_json("POST", url(server, "/record/stop"), {})[0] == 409


class TestStateFeed:
    def test_subscriber_receives_every_frame_at_60hz(self, server, seven_dof):
        conn = http.client.HTTPConnection("127.0.0.1", server.http_port, timeout=10)
        conn.request("GET", "/state/feed")
        resp = conn.getresponse()
        assert resp.status == 200
        received = []

        def reader():
            buf = b""
            while len(received) < 30:
                chunk = resp.read1(65536)
                if not chunk:
                    return
                buf += chunk
                while b"\n\n" in buf:
                    event, buf = buf.split(b"\n\n", 1)
                    if event.startswith(b"data: "):
                        received.append(json.loads(event[6:]))

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        time.sleep(0.2)
        with StreamClient("127.0.0.1", server.stream_port) as client:
            for k in range(30):
                client.send_packet(make_packet(seven_dof, k))
                time.sleep(1 / 60)
        t.join(timeout=10)
        conn.close()
        assert len(received) == 30
        assert [r["frame_index"] for r in received] == list(range(30))
        assert "link_poses" not in received[0]

    def test_full_feed_includes_link_poses(self, server, seven_dof):
        conn = http.client.HTTPConnection("127.0.0.1", server.http_port, timeout=10)
        conn.request("GET", "/state/feed?full=1")
        resp = conn.getresponse()
        got = {}

        def reader():
            buf = b""
            while not got:
                chunk = resp.read1(65536)
                if not chunk:
                    return
                buf += chunk
                if b"\n\n" in buf:
                    event, _ = buf.split(b"\n\n", 1)
                    if event.startswith(b"data: "):
                        got["doc"] = json.loads(event[6:])
                        return

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        time.sleep(0.2)
        with StreamClient("127.0.0.1", server.stream_port) as client:
            client.send_packet(make_packet(seven_dof, 0))
            time.sleep(0.2)
        t.join(timeout=5)
        conn.close()
        assert "link_poses" in got["doc"]
        assert len(got["doc"]["link_poses"]) == len(seven_dof.links)

    def test_slow_subscriber_gets_latest_value(self):
        feed = StateFeed(max_hz=1000)
        sub = feed.subscribe()

        class Snap:
            def __init__(self, i):
                self.frame_index = i

        for i in range(50):
            feed.publish(Snap(i))
        snap, seq = sub.next(0, timeout=0.5)
        assert snap.frame_index == 49  # conflated to the latest
        feed.publish(Snap(50))
        snap2, _ = sub.next(seq, timeout=0.5)
        assert snap2.frame_index == 50
        feed.unsubscribe(sub)
        assert feed.subscriber_count == 0


class TestWebSocketBridge:
    def _ws_connect(self, server):
        sock = socket.create_connection(("127.0.0.1", server.http_port), timeout=5)
        key = "dGhlIHNhbXBsZSBub25jZQ=="
        req = (
            f"GET /stream/ws HTTP/1.1\r\nHost: 127.0.0.1:{server.http_port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        sock.sendall(req.encode())
        buf = b""
        while b"\r\n\r\n" not in buf:
            buf += sock.recv(1024)
        head = buf.split(b"\r\n\r\n")[0].decode()
        assert "101" in head.split("\r\n")[0]
        assert "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=" in head
        return sock

    @staticmethod
    def _ws_send_binary(sock, payload: bytes):
        mask = b"\x11\x22\x33\x44"
        header = bytes([0x82])
        n = len(payload)
        if n < 126:
            header += bytes([0x80 | n])
        elif n < 65536:
            header += bytes([0x80 | 126]) + struct.pack(">H", n)
        else:
            header += bytes([0x80 | 127]) + struct.pack(">Q", n)
        masked = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
        sock.sendall(header + mask + masked)

    def test_ws_frames_drive_the_session(self, server, seven_dof):
        sock = self._ws_connect(server)
        for k in range(10):
            self._ws_send_binary(sock, encode_frame_packet(make_packet(seven_dof, k)))
        deadline = time.time() + 5
        while server.session.frame_index < 10 and time.time() < deadline:
            time.sleep(0.02)
        assert server.session.frame_index == 10
        sock.close()

    def test_ws_echo_ack(self, server, seven_dof):
        sock = self._ws_connect(server)
        p = make_packet(seven_dof, 0)
        p.flags |= 0x0001
        self._ws_send_binary(sock, encode_frame_packet(p))
        # expect one unmasked binary frame with the 20-byte ack
        head = b""
        while len(head) < 2:
            head += sock.recv(2 - len(head))
        assert head[0] == 0x82
        n = head[1] & 0x7F
        payload = b""
        while len(payload) < n:
            payload += sock.recv(n - len(payload))
        assert payload[:4] == b"FCA1"
        sock.close()


class TestFeedIndependence:
    def test_pipeline_time_with_and_without_slow_subscribers(self, server, seven_dof):
        """Mean guidance compute must not move by more than 20% when three
        slow SSE subscribers are attached."""

        def run_batch(offset):
            with StreamClient("127.0.0.1", server.stream_port) as client:
                for k in range(120):
                    client.send_packet(make_packet(seven_dof, offset + k))
                    time.sleep(0.002)

        run_batch(0)  # warm-up
        t0 = time.perf_counter()
        run_batch(200)
        base = time.perf_counter() - t0

        conns = []
        for _ in range(3):
            conn = http.client.HTTPConnection("127.0.0.1", server.http_port, timeout=30)
            conn.request("GET", "/state/feed")
            conn.getresponse()
            conns.append(conn)  # never read: worst-case slow consumer
        time.sleep(0.1)
        t0 = time.perf_counter()
        run_batch(400)
        with_subs = time.perf_counter() - t0
        for c in conns:
            c.close()
        assert with_subs < base * 1.2 + 0.2
