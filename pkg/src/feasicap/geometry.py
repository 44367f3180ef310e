"""Rigid-transform math shared by the kinematics, guidance, and replay layers.

A Pose is a rotation matrix plus a translation vector, kept separate rather
than as a 4x4 matrix so composition and inversion stay cheap in the per-frame
loop. Helpers cover the SO(3) log/exp needed for IK orientation errors and
replay slerp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Pose:
    """Rigid transform: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        return Pose(m[:3, :3].copy(), m[:3, 3].copy())

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt.copy(), -(rt @ self.translation))

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def copy(self) -> "Pose":
        return Pose(self.rotation.copy(), self.translation.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.rotation).all() and np.isfinite(self.translation).all())

    def is_rigid(self, tol: float = 1e-9) -> bool:
        if not self.is_finite():
            return False
        r = self.rotation
        return bool(
            np.abs(r.T @ r - np.eye(3)).max() <= tol
            and abs(np.linalg.det(r) - 1.0) <= tol
        )

    def allclose(self, other: "Pose", tol: float = 1e-9) -> bool:
        return bool(
            np.abs(self.rotation - other.rotation).max() <= tol
            and np.abs(self.translation - other.translation).max() <= tol
        )

    def __repr__(self):
        t = np.array2string(self.translation, precision=4, suppress_small=True)
        return f"Pose(t={t})"


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """URDF fixed-axis convention: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues' formula. axis must be a unit vector."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def axis_angle_from_rotation(r: np.ndarray) -> np.ndarray:
    """SO(3) log map: returns axis * angle, with angle in [0, pi].

    Stable near both identity (series fallback) and half-turn (diagonal
    extraction of the axis).
    """
    tr = float(np.trace(r))
    cos_a = max(-1.0, min(1.0, (tr - 1.0) * 0.5))
    angle = math.acos(cos_a)
    if angle < 1e-10:
        # first-order: skew part already equals axis*angle
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) * 0.5
    if angle > math.pi - 1e-6:
        # near pi the skew part vanishes; recover axis from R + I
        m = (r + np.eye(3)) * 0.5
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        # fix signs from the largest component
        k = int(np.argmax(axis))
        if axis[k] > 0.0:
            for i in range(3):
                if i != k and m[k, i] < 0.0:
                    axis[i] = -axis[i]
        n = np.linalg.norm(axis)
        if n == 0.0:
            return np.zeros(3)
        return axis / n * angle
    s = math.sin(angle)
    vec = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) * (0.5 / s)
    return vec * angle


def rotation_angle(r: np.ndarray) -> float:
    tr = float(np.trace(r))
    return math.acos(max(-1.0, min(1.0, (tr - 1.0) * 0.5)))


def slerp_rotation(ra: np.ndarray, rb: np.ndarray, alpha: float) -> np.ndarray:
    """Geodesic interpolation from ra (alpha=0) to rb (alpha=1)."""
    rel = axis_angle_from_rotation(rb @ ra.T)
    angle = np.linalg.norm(rel)
    if angle < 1e-15:
        return ra.copy()
    return rotation_about_axis(rel / angle, alpha * angle) @ ra


def lerp_pose(a: Pose, b: Pose, alpha: float) -> Pose:
    """Linear translation, slerp rotation."""
    return Pose(
        slerp_rotation(a.rotation, b.rotation, alpha),
        (1.0 - alpha) * a.translation + alpha * b.translation,
    )
