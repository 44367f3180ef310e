import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from feasicap.geometry import (
    Pose,
    axis_angle_from_rotation,
    lerp_pose,
    rotation_about_axis,
    rotation_angle,
    rpy_to_rotation,
    slerp_rotation,
)


class TestPose:
    def test_compose_inverse_identity(self, rng):
        for _ in range(50):
            r = Rotation.random(random_state=int(rng.integers(0, 2**31))).as_matrix()
            p = Pose(r, rng.uniform(-2, 2, 3))
            ident = p.compose(p.inverse())
            assert ident.allclose(Pose.identity(), 1e-12)

    def test_matrix_round_trip(self, rng):
        r = Rotation.random(random_state=3).as_matrix()
        p = Pose(r, [1, 2, 3])
        assert Pose.from_matrix(p.as_matrix()).allclose(p, 0.0)

    def test_rigidity_check(self):
        assert Pose.identity().is_rigid()
        assert not Pose(np.eye(3) * 2, np.zeros(3)).is_rigid()
        assert not Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).is_rigid()

    def test_transform_point(self):
        p = Pose(rpy_to_rotation(0, 0, math.pi / 2), [1, 0, 0])
        assert p.transform_point([1, 0, 0]) == pytest.approx([1, 1, 0], abs=1e-12)


class TestAxisAngle:
    def test_round_trip_generic(self, rng):
        for _ in range(200):
            vec = rng.standard_normal(3)
            vec = vec / np.linalg.norm(vec) * rng.uniform(1e-8, math.pi - 1e-7)
            r = rotation_about_axis(vec / np.linalg.norm(vec), np.linalg.norm(vec))
            back = axis_angle_from_rotation(r)
            assert back == pytest.approx(vec, abs=1e-7)

    def test_identity(self):
        assert axis_angle_from_rotation(np.eye(3)) == pytest.approx([0, 0, 0])

    def test_near_pi(self):
        for axis in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [0.6, 0.8, 0.0]):
            axis = np.asarray(axis, dtype=float)
            r = rotation_about_axis(axis, math.pi - 1e-9)
            back = axis_angle_from_rotation(r)
            assert np.linalg.norm(back) == pytest.approx(math.pi, abs=1e-6)
            assert abs(abs(back @ axis) - np.linalg.norm(back)) < 1e-6

    def test_matches_scipy(self, rng):
        for _ in range(100):
            r = Rotation.random(random_state=int(rng.integers(0, 2**31))).as_matrix()
            mine = axis_angle_from_rotation(r)
            ref = Rotation.from_matrix(r).as_rotvec()
            assert mine == pytest.approx(ref, abs=1e-8)


class TestSlerp:
    def test_endpoints(self, rng):
        ra = Rotation.random(random_state=5).as_matrix()
        rb = Rotation.random(random_state=6).as_matrix()
        assert slerp_rotation(ra, rb, 0.0) == pytest.approx(ra, abs=1e-12)
        assert slerp_rotation(ra, rb, 1.0) == pytest.approx(rb, abs=1e-10)

    def test_angle_linear_in_alpha(self):
        ra = np.eye(3)
        rb = rotation_about_axis(np.array([0.0, 0.0, 1.0]), 1.0)
        for alpha in (0.25, 0.5, 0.75):
            mid = slerp_rotation(ra, rb, alpha)
            assert rotation_angle(mid @ ra.T) == pytest.approx(alpha, abs=1e-12)

    def test_lerp_pose_translation(self):
        a = Pose(np.eye(3), [0, 0, 0])
        b = Pose(np.eye(3), [1, 2, 3])
        assert lerp_pose(a, b, 0.5).translation == pytest.approx([0.5, 1.0, 1.5])
