"""Synthetic demonstrator: scripted pick-and-place and tossing trajectories
that optionally react to guidance feedback by slowing down.

The reaction model is deliberately simple (proportional slowdown after a
fixed latency) - enough to reproduce the guided-vs-unguided shift in
infeasible-frame ratio at desk scale, with no claim about human behavior.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .episodes import (
    CH_FEASIBILITY,
    CH_IMAGE,
    CH_MASK,
    CH_POSE,
    Episode,
    Message,
)
from .geometry import Pose, rotation_about_axis, slerp_rotation
from .guidance import GuidanceSession, State, TrackerFrame
from .packets import FramePacket, encode_frame_packet

FRAME_RATE = 60.0
WALL_BASE = 1_700_000_000.0  # fixed synthetic wall clock start, keeps runs bit-exact


@dataclass
class TrapezoidSpeed:
    accel: float = 1.5   # m/s^2 along the path
    cruise: float = 0.45  # m/s

    def __post_init__(self):
        if self.accel <= 0 or self.cruise < 0:
            raise ValueError("speeds must be >= 0 and accel > 0")


@dataclass
class TossSpike:
    time: float         # s, on the nominal (unslowed) schedule
    peak_rate: float    # rad/s, wrist flick angular speed
    duration: float = 0.1
    axis: tuple = (1.0, 0.0, 0.0)


@dataclass
class DemoProfile:
    task: str  # "pick_place" | "toss"
    waypoints: list[Pose]
    speed: TrapezoidSpeed = field(default_factory=TrapezoidSpeed)
    toss_spike: TossSpike | None = None
    noise_amp: float = 0.0
    lead_frames: int = 30   # stationary frames before/after motion

    def __post_init__(self):
        if self.task not in ("pick_place", "toss"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "toss" and self.toss_spike is None:
            raise ValueError("toss profile needs exactly one spike")
        if self.task == "pick_place" and self.toss_spike is not None:
            raise ValueError("pick_place profile must not carry a spike")
        if len(self.waypoints) < 2:
            raise ValueError("need at least two waypoints")

    def to_json(self) -> dict:
        doc = {
            "task": self.task,
            "waypoints": [p.as_matrix().tolist() for p in self.waypoints],
            "speed": {"accel": self.speed.accel, "cruise": self.speed.cruise},
            "noise_amp": self.noise_amp,
            "lead_frames": self.lead_frames,
        }
        if self.toss_spike is not None:
            doc["toss_spike"] = {
                "time": self.toss_spike.time,
                "peak_rate": self.toss_spike.peak_rate,
                "duration": self.toss_spike.duration,
                "axis": list(self.toss_spike.axis),
            }
        return doc

    @staticmethod
    def from_json(doc: dict) -> "DemoProfile":
        spike = None
        if "toss_spike" in doc:
            s = doc["toss_spike"]
            spike = TossSpike(s["time"], s["peak_rate"], s.get("duration", 0.1),
                              tuple(s.get("axis", (1.0, 0.0, 0.0))))
        return DemoProfile(
            task=doc["task"],
            waypoints=[Pose.from_matrix(np.array(m)) for m in doc["waypoints"]],
            speed=TrapezoidSpeed(**doc.get("speed", {})),
            toss_spike=spike,
            noise_amp=doc.get("noise_amp", 0.0),
            lead_frames=doc.get("lead_frames", 30),
        )

    @staticmethod
    def load(path) -> "DemoProfile":
        return DemoProfile.from_json(json.loads(Path(path).read_text()))


# gripper orientation used by the stock profiles: pointing down-forward,
# reachable with good manipulability across the whole desk workspace
_GRIP = np.array(
    [
        [-0.801, 0.0, 0.598],
        [0.0, 1.0, 0.0],
        [-0.598, 0.0, -0.801],
    ]
)


def _wp(x, y, z) -> Pose:
    u, _, vt = np.linalg.svd(_GRIP)
    return Pose(u @ vt, np.array([x, y, z]))


def default_profile(task: str) -> DemoProfile:
    """Stock desk-scale profiles sized for the bundled 7-dof arm."""
    if task == "pick_place":
        return DemoProfile(
            task="pick_place",
            waypoints=[
                _wp(0.50, -0.10, 0.40),
                _wp(0.52, -0.18, 0.30),
                _wp(0.52, -0.18, 0.24),
                _wp(0.52, -0.18, 0.38),
                _wp(0.48, 0.20, 0.38),
                _wp(0.48, 0.20, 0.28),
            ],
            speed=TrapezoidSpeed(accel=6.0, cruise=1.4),
            noise_amp=0.004,
            lead_frames=15,
        )
    if task == "toss":
        # smooth forward swing: grasp low, arc up to the release, follow
        # through; the rate violation comes from the wrist flick, not the path
        return DemoProfile(
            task="toss",
            waypoints=[
                _wp(0.52, -0.10, 0.28),
                _wp(0.50, -0.02, 0.34),
                _wp(0.50, 0.06, 0.42),
                _wp(0.54, 0.14, 0.47),
                _wp(0.58, 0.20, 0.44),
            ],
            speed=TrapezoidSpeed(accel=6.0, cruise=1.4),
            toss_spike=TossSpike(time=0.55, peak_rate=12.0, duration=0.15),
            noise_amp=0.004,
            lead_frames=15,
        )
    raise ValueError(f"unknown task {task!r}")


@dataclass
class ReactionModel:
    attends: bool = True
    slowdown_gain: float = 0.5
    reaction_latency: int = 6  # frames (~100 ms at 60 Hz)

    def __post_init__(self):
        if not 0.0 <= self.slowdown_gain <= 1.0:
            raise ValueError("slowdown_gain must be in [0, 1]")
        if self.reaction_latency < 0:
            raise ValueError("reaction_latency must be >= 0")


class _Spline:
    """Catmull-Rom through the waypoint translations, arc-length indexed."""

    def __init__(self, points, samples_per_seg: int = 256):
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        tangents = np.zeros_like(pts)
        tangents[0] = pts[1] - pts[0]
        tangents[-1] = pts[-1] - pts[-2]
        if n > 2:
            tangents[1:-1] = (pts[2:] - pts[:-2]) * 0.5
        self._pts = pts
        self._tan = tangents
        # dense arc-length table
        us = np.linspace(0.0, 1.0, samples_per_seg)
        xs = []
        for seg in range(n - 1):
            seg_pts = self._eval_segment(seg, us)
            xs.append(seg_pts if seg == 0 else seg_pts[1:])
        dense = np.vstack(xs)
        d = np.linalg.norm(np.diff(dense, axis=0), axis=1)
        self._cum = np.concatenate([[0.0], np.cumsum(d)])
        self._dense = dense
        self.length = float(self._cum[-1])

    def _eval_segment(self, seg, u):
        u = np.atleast_1d(u)
        p0, p1 = self._pts[seg], self._pts[seg + 1]
        m0, m1 = self._tan[seg], self._tan[seg + 1]
        u2, u3 = u * u, u * u * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        return (
            np.outer(h00, p0) + np.outer(h10, m0) + np.outer(h01, p1) + np.outer(h11, m1)
        )

    def at_arc(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(i, len(self._cum) - 2)
        c0, c1 = self._cum[i], self._cum[i + 1]
        alpha = 0.0 if c1 <= c0 else (s - c0) / (c1 - c0)
        return (1 - alpha) * self._dense[i] + alpha * self._dense[i + 1]

    def waypoint_arcs(self) -> np.ndarray:
        """Arc position of each waypoint (for orientation interpolation)."""
        n = len(self._pts)
        samples = (len(self._dense) - 1) // (n - 1)
        idx = np.arange(n) * samples
        idx[-1] = len(self._cum) - 1
        return self._cum[idx]


class _Cursor:
    """Incremental trajectory generator; speed can be modulated per frame."""

    def __init__(self, profile: DemoProfile, seed: int):
        self.profile = profile
        self.rng = np.random.default_rng(seed)
        # demonstrators differ in pace: per-run cruise drawn once from the seed
        self.cruise = profile.speed.cruise * (1.0 + 0.2 * (2.0 * self.rng.random() - 1.0))
        self.spline = _Spline([p.translation for p in profile.waypoints])
        self.way_arcs = self.spline.waypoint_arcs()
        self.s = 0.0
        self.v = 0.0
        self.ceiling: float | None = None  # attentive runs cap speed here
        self.frame = 0
        self.lead_left = profile.lead_frames
        self.tail_left = profile.lead_frames
        self.finished = False
        self._noise = np.zeros(3)
        self._flick_angle = 0.0
        self._flick_progress = None  # s along flick when active
        self.spike_frame: int | None = None
        spike = profile.toss_spike
        self._spike_arc = (
            max(self._nominal_arc_at(spike.time), 1e-9) if spike else None
        )

    def _nominal_arc_at(self, t: float) -> float:
        """Arc position at nominal time t under the unslowed trapezoid."""
        dt = 1.0 / FRAME_RATE
        s = v = 0.0
        steps = int(round(t * FRAME_RATE)) - self.profile.lead_frames
        sp = self.profile.speed
        for _ in range(max(steps, 0)):
            v = min(v + sp.accel * dt, self.cruise, math.sqrt(2 * sp.accel * max(self.spline.length - s, 0.0)))
            s += v * dt
        return min(s, self.spline.length)

    def _orientation(self, s: float) -> np.ndarray:
        arcs = self.way_arcs
        i = int(np.searchsorted(arcs, s, side="right")) - 1
        i = min(max(i, 0), len(arcs) - 2)
        span = arcs[i + 1] - arcs[i]
        alpha = 0.0 if span <= 0 else min(max((s - arcs[i]) / span, 0.0), 1.0)
        return slerp_rotation(
            self.profile.waypoints[i].rotation,
            self.profile.waypoints[i + 1].rotation,
            alpha,
        )

    def step(self, slow_mult: float) -> Pose | None:
        """Next pose at 60 Hz, or None when the trajectory is complete."""
        if self.finished:
            return None
        dt = 1.0 / FRAME_RATE
        sp = self.profile.speed
        if self.lead_left > 0:
            self.lead_left -= 1
        elif self.s < self.spline.length:
            brake = math.sqrt(2 * sp.accel * max(self.spline.length - self.s, 0.0))
            cap = self.cruise if self.ceiling is None else min(self.cruise, self.ceiling)
            # slow_mult < 1 compounds frame over frame while feedback stays
            # bad, so the generator brakes until the state clears
            self.v = min(self.v + sp.accel * dt, cap, brake) * max(slow_mult, 0.0)
            prev_s = self.s
            self.s = min(self.s + self.v * dt, self.spline.length)
            spike = self.profile.toss_spike
            if (
                spike is not None
                and self._flick_progress is None
                and prev_s < self._spike_arc <= self.s
            ):
                self._flick_progress = 0.0
                self.spike_frame = self.frame
        elif self.tail_left > 0:
            self.tail_left -= 1
        else:
            self.finished = True
            return None

        # wrist flick: triangular angular-rate pulse, independent of slowdown
        spike = self.profile.toss_spike
        if spike is not None and self._flick_progress is not None:
            u = self._flick_progress
            if u < spike.duration:
                rate = spike.peak_rate * (1.0 - abs(2.0 * u / spike.duration - 1.0))
                self._flick_angle += rate * dt
                self._flick_progress = u + dt

        if self.profile.noise_amp > 0.0:
            white = self.rng.standard_normal(3)
            self._noise = 0.9 * self._noise + 0.1 * white * self.profile.noise_amp
        pos = self.spline.at_arc(self.s) + self._noise
        rot = self._orientation(self.s)
        if self._flick_angle != 0.0:
            axis = np.asarray(spike.axis, dtype=float)
            axis = axis / np.linalg.norm(axis)
            rot = rotation_about_axis(axis, self._flick_angle) @ rot
        self.frame += 1
        return Pose(rot, pos)


def _frame_at(k: int, pose: Pose) -> TrackerFrame:
    t = k / FRAME_RATE
    return TrackerFrame(
        device_pose=pose,
        tracker_timestamp=t,
        wall_clock=WALL_BASE + t,
        image=b"",
    )


def generate(profile: DemoProfile, seed: int) -> list[TrackerFrame]:
    """Open-loop 60 Hz tracker frames; deterministic in (profile, seed)."""
    cursor = _Cursor(profile, seed)
    frames = []
    while True:
        pose = cursor.step(1.0)
        if pose is None:
            return frames
        frames.append(_frame_at(len(frames), pose))


@dataclass
class ClosedLoopResult:
    episode: Episode
    outputs: list
    spike_frame: int | None


def closed_loop_run(
    profile: DemoProfile,
    reaction: ReactionModel,
    session: GuidanceSession,
    seed: int,
    episode_id: str | None = None,
) -> ClosedLoopResult:
    """Drive a guidance session with the generator reacting to its feedback.

    While the emitted state (delayed by reaction_latency frames) is warning
    or infeasible, upcoming speed is scaled by (1 - slowdown_gain).
    attends=False reproduces the open-loop baseline.
    """
    cursor = _Cursor(profile, seed)
    if reaction.attends:
        # attentive demonstrators start cautious and remember the pace the
        # feedback allowed; the ceiling ratchets down on bad states and
        # creeps back up while the state stays clear
        cursor.ceiling = 0.3 * cursor.cruise
    state_history: list[State] = []
    outputs = []
    pose_msgs, image_msgs, mask_msgs, feas_msgs = [], [], [], []
    k = 0
    dt = 1.0 / FRAME_RATE
    while k < 20000:
        slow = 1.0
        if reaction.attends and len(state_history) > reaction.reaction_latency:
            delayed = state_history[-1 - reaction.reaction_latency]
            if delayed in (State.WARNING, State.INFEASIBLE):
                slow = 1.0 - reaction.slowdown_gain
        pose = cursor.step(slow)
        if pose is None:
            break
        if reaction.attends:
            if slow < 1.0:
                cursor.ceiling = max(min(cursor.ceiling, cursor.v), 0.05)
            else:
                cursor.ceiling = min(
                    cursor.cruise, cursor.ceiling + 0.1 * profile.speed.accel * dt
                )
        frame = _frame_at(k, pose)
        out = session.process_frame(frame)
        outputs.append(out)
        state_history.append(out.state)

        log_ns = int(round(frame.wall_clock * 1e9))
        packet = FramePacket(frame.tracker_timestamp, frame.wall_clock,
                             pose.as_matrix(), b"")
        pose_msgs.append(Message(log_ns, k, encode_frame_packet(packet)))
        image_msgs.append(Message(log_ns, k, frame.image))
        # synthetic gripper width: closed mid-trajectory, open at the ends
        width = 80 if cursor.s < 0.3 * cursor.spline.length else 0
        mask_msgs.append(Message(log_ns, k, struct.pack("<H", width)))
        feas_msgs.append(Message(log_ns, k, json.dumps(out.to_record()).encode()))
        k += 1

    episode = Episode(
        id=episode_id or f"sim-{profile.task}-{seed}-{'guided' if reaction.attends else 'open'}",
        channels={
            CH_POSE: pose_msgs,
            CH_IMAGE: image_msgs,
            CH_MASK: mask_msgs,
            CH_FEASIBILITY: feas_msgs,
        },
        start_wall=WALL_BASE,
        end_wall=WALL_BASE + max(k - 1, 0) / FRAME_RATE,
    )
    return ClosedLoopResult(episode, outputs, cursor.spike_frame)
