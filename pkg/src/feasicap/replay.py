"""Retarget a recorded trajectory onto a simulated arm and execute it.

Recorded poses are re-expressed relative to the first frame, anchored to
the robot's current TCP, axis-remapped, resampled onto a 10 ms command
grid, and velocity-clamped (0.25 m/s translation, 0.5 rad/s rotation by
default). Execution tracks the command with warm-started IK under the
model's joint velocity limits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTimestamps, FeasicapError
from .geometry import Pose, lerp_pose, rotation_angle
from .kinematics import IkParams, RobotModel, dls_ik, forward_kinematics

TICK = 0.01  # 100 Hz command grid
DEFAULT_TRANS_LIMIT = 0.25  # m/s
DEFAULT_ROT_LIMIT = 0.5     # rad/s


class EmptyEpisode(FeasicapError):
    """Replay needs at least one recorded pose."""


# default tracker->robot axis remap: tracker (x right, y up, z toward user)
# to robot base (x forward, y left, z up): x_r=-z_t, y_r=-x_t, z_r=y_t
DEFAULT_REMAP = np.array(
    [
        [0.0, 0.0, -1.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    ]
)


@dataclass
class FrameRemap:
    rotation: np.ndarray = field(default_factory=lambda: DEFAULT_REMAP.copy())

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1) > 1e-9:
            raise ValueError("remap must be orthonormal with det +1")
        self.rotation = r

    def apply(self, motion: Pose) -> Pose:
        """Express a motion given in tracker axes in robot-base axes."""
        r = self.rotation
        return Pose(r @ motion.rotation @ r.T, r @ motion.translation)


@dataclass
class ReplayPlan:
    commands: list[Pose]
    times: np.ndarray
    clamped: list[bool]
    anchor: Pose
    # optional scalar gripper channel, passed through untouched (one value
    # per command, carried from the nearest preceding source sample)
    gripper: list[float] | None = None

    def __len__(self):
        return len(self.commands)


def retarget(poses, robot_current_tcp: Pose, remap: FrameRemap | None = None) -> list[Pose]:
    """command_i = anchor . remap(pose_0^-1 . pose_i); command_0 == anchor."""
    poses = list(poses)
    if not poses:
        raise EmptyEpisode("no recorded poses to retarget")
    if remap is None:
        remap = FrameRemap()
    inv0 = poses[0].inverse()
    return [robot_current_tcp.compose(remap.apply(inv0.compose(p))) for p in poses]


def resample_and_clamp(
    poses,
    timestamps,
    trans_limit: float = DEFAULT_TRANS_LIMIT,
    rot_limit: float = DEFAULT_ROT_LIMIT,
    tick: float = TICK,
    anchor: Pose | None = None,
    gripper=None,
) -> ReplayPlan:
    """Interpolate onto the tick grid, then clamp step sizes.

    A grid step exceeding either limit is split into equal sub-steps along
    its interpolation arc (translation lerp, rotation slerp), time-dilating
    the remainder; no pose is ever skipped. Optional per-source gripper
    scalars ride along untouched, each command taking the value of its
    nearest preceding source sample.
    """
    poses = list(poses)
    ts = np.asarray(timestamps, dtype=float)
    if len(poses) == 0:
        raise EmptyEpisode("no poses to resample")
    if len(poses) != len(ts):
        raise ValueError("poses and timestamps length mismatch")
    if gripper is not None and len(gripper) != len(poses):
        raise ValueError("gripper and poses length mismatch")
    if np.any(np.diff(ts) <= 0) if len(ts) > 1 else False:
        raise DegenerateTimestamps("source timestamps must be strictly increasing")

    # resample source onto the tick grid
    grid: list[Pose] = [poses[0]]
    grid_src: list[int] = [0]
    if len(poses) > 1:
        duration = ts[-1] - ts[0]
        n_ticks = int(math.ceil(duration / tick - 1e-9))
        src = 0
        for k in range(1, n_ticks + 1):
            t = ts[0] + min(k * tick, duration)
            while src + 1 < len(ts) - 1 and ts[src + 1] < t:
                src += 1
            t0, t1 = ts[src], ts[src + 1]
            alpha = (t - t0) / (t1 - t0)
            grid.append(lerp_pose(poses[src], poses[src + 1], min(max(alpha, 0.0), 1.0)))
            # nearest preceding source sample (the segment end counts once
            # the grid time reaches it)
            grid_src.append(src + 1 if t >= t1 - 1e-12 else src)

    # sequential clamping on the grid
    max_dp = trans_limit * tick
    max_dth = rot_limit * tick
    commands: list[Pose] = [grid[0]]
    clamped: list[bool] = [False]
    cmd_src: list[int] = [grid_src[0]]
    for target, src in zip(grid[1:], grid_src[1:]):
        prev = commands[-1]
        dp = float(np.linalg.norm(target.translation - prev.translation))
        dth = rotation_angle(target.rotation @ prev.rotation.T)
        n = max(
            1,
            int(math.ceil(dp / max_dp - 1e-9)),
            int(math.ceil(dth / max_dth - 1e-9)),
        )
        for i in range(1, n + 1):
            commands.append(lerp_pose(prev, target, i / n))
            clamped.append(n > 1)
            cmd_src.append(src)

    times = np.arange(len(commands)) * tick
    return ReplayPlan(
        commands=commands,
        times=times,
        clamped=clamped,
        anchor=anchor if anchor is not None else poses[0],
        gripper=[float(gripper[s]) for s in cmd_src] if gripper is not None else None,
    )


@dataclass
class TickTrace:
    tick: int
    tcp_error: float
    ik_residual: float
    rate_saturated: bool
    infeasible: bool


@dataclass
class ExecutionReport:
    success: bool
    ticks: int
    max_tcp_error: float
    infeasible_ticks: list[int]
    trace: list[TickTrace]

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "ticks": self.ticks,
            "max_tcp_error": self.max_tcp_error,
            "infeasible_ticks": self.infeasible_ticks,
            "tcp_error": [round(t.tcp_error, 9) for t in self.trace],
        }


class SimulatedRobot:
    """Stand-in arm: per-tick IK tracker integrating under velocity limits."""

    def __init__(self, model: RobotModel, q0=None, ik_params: IkParams | None = None,
                 tick: float = TICK):
        self.model = model
        self.q = model.clamp(
            np.asarray(q0, dtype=float) if q0 is not None else model.mid_posture()
        )
        self.ik_params = ik_params or IkParams()
        self.tick = tick
        self.trace: list[TickTrace] = []

    @property
    def tcp_pose(self) -> Pose:
        return forward_kinematics(self.model, self.q).ee_pose

    def move_to(self, pose: Pose):
        """Teleport to an exactly IK-reachable start; raises if unreachable."""
        ik = dls_ik(self.model, pose, self.q, self.ik_params)
        if not ik.converged:
            raise ValueError("start pose unreachable for the simulated robot")
        self.q = ik.q

    def step(self, target: Pose) -> TickTrace:
        """Advance one tick toward the commanded TCP pose."""
        ik = dls_ik(self.model, target, self.q, self.ik_params)
        dq = ik.q - self.q
        max_ratio = float(np.max(np.abs(dq) / (self.model.vel_limits * self.tick)))
        saturated = max_ratio > 1.0
        if saturated:
            dq = dq / max_ratio
        self.q = self.model.clamp(self.q + dq)
        tcp = forward_kinematics(self.model, self.q).ee_pose
        err = float(np.linalg.norm(tcp.translation - target.translation))
        trace = TickTrace(
            tick=len(self.trace),
            tcp_error=err,
            ik_residual=ik.residual,
            rate_saturated=saturated,
            infeasible=bool(saturated or ik.residual >= self.ik_params.eps),
        )
        self.trace.append(trace)
        return trace


def execute(plan: ReplayPlan, robot: SimulatedRobot, cancel=None) -> ExecutionReport:
    """Run the plan tick by tick; failures are report content, not errors."""
    infeasible = []
    max_err = 0.0
    for k, cmd in enumerate(plan.commands):
        if cancel is not None and cancel():
            break
        t = robot.step(cmd)
        max_err = max(max_err, t.tcp_error)
        if t.infeasible:
            infeasible.append(k)
    return ExecutionReport(
        success=not infeasible,
        ticks=len(robot.trace),
        max_tcp_error=max_err,
        infeasible_ticks=infeasible,
        trace=list(robot.trace),
    )
