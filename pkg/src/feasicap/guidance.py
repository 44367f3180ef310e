"""Per-frame feasibility pipeline with debounced three-state output.

A GuidanceSession owns the sequential per-frame state machine: pose
derivation from tracker frames (calibration, clutch, base anchor),
warm-started IK, FK, self-collision, windowed joint-rate ratio,
manipulability, raw-state mapping, and debounce. Outputs are immutable
snapshots that any number of consumers (recorder, feed, UI) may fan out.
"""
from __future__ import annotations

import enum
import json
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .collision import CollisionSet, build_collision_set, check_self_collision
from .errors import DegenerateTimestamps, FeasicapError
from .geometry import Pose
from .kinematics import IkParams, RobotModel, dls_ik, forward_kinematics, jacobian, manipulability


class TrackingLost(FeasicapError):
    """Tracker frame carries a non-finite pose."""


class NotConfigured(FeasicapError):
    """process_frame called before calibration and base anchor are set."""


class State(str, enum.Enum):
    FEASIBLE = "feasible"
    WARNING = "warning"
    INFEASIBLE = "infeasible"


GHOST_COLOR = {State.FEASIBLE: "green", State.WARNING: "yellow", State.INFEASIBLE: "red"}
HAPTIC = {State.FEASIBLE: "none", State.WARNING: "intermittent", State.INFEASIBLE: "continuous"}


@dataclass
class TrackerFrame:
    device_pose: Pose
    tracker_timestamp: float
    wall_clock: float
    image: bytes = b""


@dataclass
class Calibration:
    cam_to_tcp: Pose


@dataclass
class BaseAnchor:
    base_pose: Pose


@dataclass
class ClutchState:
    engaged: bool
    frozen_target: Pose | None = None


@dataclass
class GuidanceConfig:
    tau_r: float = 0.8
    tau_w: float = 0.01          # not from any published figure; see README
    rate_window: int = 5
    debounce_frames: int = 3
    ik_params: IkParams = field(default_factory=IkParams)
    margin: float = 0.02
    rate_smoothing: str = "mean"  # "mean" (default) or "max" over the window
    jump_threshold: float = 0.5   # rad; flags IK branch jumps in the log
    initial_seed: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.tau_r < 1.0:
            raise ValueError("tau_r must be in (0, 1)")
        if self.rate_window < 1:
            raise ValueError("rate_window must be >= 1")
        if not 1 <= self.debounce_frames <= 10:
            raise ValueError("debounce_frames must be in 1..10")
        if self.rate_smoothing not in ("mean", "max"):
            raise ValueError("rate_smoothing must be 'mean' or 'max'")


@dataclass
class GuidanceOutput:
    """One tick of the pipeline. Immutable snapshot, safe to fan out."""

    frame_index: int
    state: State
    raw_state: State
    q: np.ndarray
    residual: float       # e_t
    rate: float           # r_t
    colliding: bool       # c_t
    manipulability: float  # w_t
    target: Pose          # p_t in the robot base frame
    link_poses: list[Pose]
    ghost_color: str
    haptic: str
    tracker_timestamp: float
    wall_clock: float
    compute_micros: float
    ik_jump: bool
    ik_converged: bool
    stage_micros: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict:
        """The per-frame log record consumed by the recording layer."""
        return {
            "frame_index": self.frame_index,
            "tracker_timestamp": self.tracker_timestamp,
            "wall_clock": self.wall_clock,
            "state": self.state.value,
            "raw_state": self.raw_state.value,
            "e": self.residual,
            "r": self.rate,
            "c": self.colliding,
            "w": self.manipulability,
            "q": [float(v) for v in self.q],
            "p": [[float(v) for v in row] for row in self.target.as_matrix()],
            "compute_micros": self.compute_micros,
            "ik_jump": self.ik_jump,
        }

    def to_json(self, include_link_poses: bool = False) -> str:
        doc = self.to_record()
        doc["ghost_color"] = self.ghost_color
        doc["haptic"] = self.haptic
        if include_link_poses:
            doc["link_poses"] = [
                [[float(v) for v in row] for row in p.as_matrix()] for p in self.link_poses
            ]
        return json.dumps(doc)


def rate_ratio(q_history, timestamps, vel_limits, smoothing: str = "mean") -> float:
    """Windowed joint-rate ratio r_t.

    Velocities come from finite differences of consecutive configs; each
    frame contributes max_i |qdot_i| / vel_limit_i, and the window is
    reduced by mean (default) or max.
    """
    qs = [np.asarray(q, dtype=float) for q in q_history]
    ts = [float(t) for t in timestamps]
    if len(qs) != len(ts):
        raise ValueError("q_history and timestamps length mismatch")
    if len(qs) < 2:
        raise ValueError("rate_ratio needs at least 2 samples")
    limits = np.asarray(vel_limits, dtype=float)
    ratios = []
    for k in range(1, len(qs)):
        dt = ts[k] - ts[k - 1]
        if dt <= 0:
            raise DegenerateTimestamps(f"non-increasing timestamps at index {k}")
        ratios.append(float(np.max(np.abs(qs[k] - qs[k - 1]) / (dt * limits))))
    return max(ratios) if smoothing == "max" else sum(ratios) / len(ratios)


class Debouncer:
    """Emit a state change only after N consecutive identical raw states.

    The first raw state is emitted as-is; afterwards a candidate state must
    repeat debounce_frames times in a row before it replaces the emitted one.
    """

    def __init__(self, frames: int):
        if frames < 1:
            raise ValueError("debounce frames must be >= 1")
        self.frames = frames
        self.emitted = None
        self._candidate = None
        self._count = 0

    def update(self, raw):
        if self.emitted is None:
            self.emitted = raw
            return raw
        if raw == self.emitted:
            self._candidate = None
            self._count = 0
            return self.emitted
        if raw == self._candidate:
            self._count += 1
        else:
            self._candidate = raw
            self._count = 1
        if self._count >= self.frames:
            self.emitted = raw
            self._candidate = None
            self._count = 0
        return self.emitted


def map_raw_state(residual, colliding, rate, manip, eps, tau_r, tau_w) -> State:
    """Pure threshold mapping from the four per-frame quantities."""
    if residual >= eps or colliding or rate > 1.0:
        return State.INFEASIBLE
    if rate > tau_r or manip < tau_w:
        return State.WARNING
    return State.FEASIBLE


def calibrate(device_pose: Pose, desired_tcp_pose: Pose) -> Calibration:
    """Fixed camera-to-TCP offset from one aligned observation."""
    for p in (device_pose, desired_tcp_pose):
        if not p.is_rigid(1e-6):
            raise ValueError("calibration poses must be valid rigid transforms")
    return Calibration(device_pose.inverse().compose(desired_tcp_pose))


class GuidanceSession:
    """Single-owner sequential pipeline; one frame in flight at a time."""

    def __init__(
        self, model: RobotModel, config: GuidanceConfig | None = None,
        retain: bool = True,
    ):
        self.model = model
        self.config = config or GuidanceConfig()
        self.retain = retain
        self.collision_set: CollisionSet = build_collision_set(model, self.config.margin)
        self.calibration: Calibration | None = None
        self.base_anchor: BaseAnchor | None = None
        self.clutch = ClutchState(engaged=True)
        self._offset = Pose.identity()   # world-target correction after clutch re-engage
        self._reanchor_pending = False
        self._last_world_target: Pose | None = None
        seed = self.config.initial_seed
        self._q_prev = (
            np.asarray(seed, dtype=float) if seed is not None else model.mid_posture()
        )
        self._history: deque = deque(maxlen=self.config.rate_window + 1)
        self._debouncer = Debouncer(self.config.debounce_frames)
        self.frame_index = 0
        self.log: list[dict] = []
        self.outputs: list[GuidanceOutput] = []

    @property
    def configured(self) -> bool:
        return self.calibration is not None and self.base_anchor is not None

    def calibrate(self, device_pose: Pose, desired_tcp_pose: Pose) -> Calibration:
        # mid-session recalibration requires the clutch disengaged, like the
        # on-device alignment flow; initial setup (no frames yet) is free
        if self.frame_index > 0 and self.clutch.engaged:
            raise ValueError("disengage the clutch before recalibrating")
        self.calibration = calibrate(device_pose, desired_tcp_pose)
        return self.calibration

    def set_base_anchor(self, world_pose: Pose) -> BaseAnchor:
        if not world_pose.is_rigid(1e-6):
            raise ValueError("base anchor must be a valid rigid transform")
        self.base_anchor = BaseAnchor(world_pose.copy())
        return self.base_anchor

    def set_clutch(self, engaged: bool) -> ClutchState:
        if engaged and not self.clutch.engaged:
            # resume without a jump: recompute the offset on the next frame
            self._reanchor_pending = True
        elif not engaged and self.clutch.engaged:
            self.clutch = ClutchState(False, self._last_world_target)
            return self.clutch
        self.clutch = ClutchState(engaged, self.clutch.frozen_target)
        return self.clutch

    def _derive_world_target(self, device_pose: Pose) -> Pose:
        raw = device_pose.compose(self.calibration.cam_to_tcp)
        if not self.clutch.engaged:
            frozen = self.clutch.frozen_target
            if frozen is None:
                frozen = raw
                self.clutch = ClutchState(False, frozen)
            return frozen
        if self._reanchor_pending:
            frozen = self.clutch.frozen_target
            if frozen is not None:
                self._offset = raw.inverse().compose(frozen)
            self._reanchor_pending = False
        return raw.compose(self._offset)

    def process_frame(self, frame: TrackerFrame) -> GuidanceOutput:
        if not self.configured:
            raise NotConfigured("calibration and base anchor must be set first")
        if not frame.device_pose.is_finite():
            raise TrackingLost(f"non-finite device pose at frame {self.frame_index}")

        t0 = time.perf_counter_ns()
        world_target = self._derive_world_target(frame.device_pose)
        self._last_world_target = world_target
        target = self.base_anchor.base_pose.inverse().compose(world_target)

        t_ik0 = time.perf_counter_ns()
        ik = dls_ik(self.model, target, self._q_prev, self.config.ik_params)
        t_ik1 = time.perf_counter_ns()

        fk = forward_kinematics(self.model, ik.q)
        t_fk1 = time.perf_counter_ns()

        report = check_self_collision(self.collision_set, fk.link_poses)
        t_col1 = time.perf_counter_ns()

        # tracker timestamps are non-decreasing; a duplicate stamp adds no
        # velocity information, so the window keeps its previous contents
        if not self._history or frame.tracker_timestamp > self._history[-1][0]:
            self._history.append((frame.tracker_timestamp, ik.q))
        elif frame.tracker_timestamp < self._history[-1][0]:
            raise DegenerateTimestamps(
                f"tracker timestamp went backwards at frame {self.frame_index}"
            )
        if len(self._history) >= 2:
            qs = [q for _, q in self._history]
            ts = [t for t, _ in self._history]
            r_t = rate_ratio(qs, ts, self.model.vel_limits, self.config.rate_smoothing)
        else:
            r_t = 0.0

        w_t = manipulability(jacobian(self.model, ik.q))

        raw = map_raw_state(
            ik.residual,
            report.colliding,
            r_t,
            w_t,
            self.config.ik_params.eps,
            self.config.tau_r,
            self.config.tau_w,
        )
        emitted = self._debouncer.update(raw)
        t_state1 = time.perf_counter_ns()

        ik_jump = bool(np.linalg.norm(ik.q - self._q_prev) > self.config.jump_threshold)
        self._q_prev = ik.q

        output = GuidanceOutput(
            frame_index=self.frame_index,
            state=emitted,
            raw_state=raw,
            q=ik.q,
            residual=ik.residual,
            rate=r_t,
            colliding=report.colliding,
            manipulability=w_t,
            target=target,
            link_poses=fk.link_poses,
            ghost_color=GHOST_COLOR[emitted],
            haptic=HAPTIC[emitted],
            tracker_timestamp=frame.tracker_timestamp,
            wall_clock=frame.wall_clock,
            compute_micros=(t_state1 - t0) / 1000.0,
            ik_jump=ik_jump,
            ik_converged=ik.converged,
            stage_micros={
                "pose": (t_ik0 - t0) / 1000.0,
                "ik": (t_ik1 - t_ik0) / 1000.0,
                "fk": (t_fk1 - t_ik1) / 1000.0,
                "collision": (t_col1 - t_fk1) / 1000.0,
                "state": (t_state1 - t_col1) / 1000.0,
            },
        )
        self.frame_index += 1
        if self.retain:
            self.log.append(output.to_record())
            self.outputs.append(output)
        return output
