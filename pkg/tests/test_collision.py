import math

import numpy as np
import pytest

from feasicap.collision import (
    Capsule,
    MissingPose,
    Sphere,
    build_collision_set,
    check_self_collision,
    segment_distance,
)
from feasicap.errors import NonFiniteInput
from feasicap.geometry import Pose, rotation_about_axis
from feasicap.kinematics import forward_kinematics, load_urdf

from conftest import random_in_limit_q


def point_seg_dist(pts, b0, b1):
    d = b1 - b0
    denom = float(d @ d)
    if denom == 0.0:
        return np.linalg.norm(pts - b0, axis=1)
    t = np.clip((pts - b0) @ d / denom, 0.0, 1.0)
    return np.linalg.norm(pts - (b0 + t[:, None] * d), axis=1)


def sampling_oracle(a0, a1, b0, b1, n=2000):
    """Min distance by sampling one segment and exact point-to-segment to the
    other, both directions. Returns (estimate, upper error bound)."""
    ta = np.linspace(0.0, 1.0, n)
    pa = a0 + ta[:, None] * (a1 - a0)
    pb = b0 + ta[:, None] * (b1 - b0)
    est = min(point_seg_dist(pa, b0, b1).min(), point_seg_dist(pb, a0, a1).min())
    la = np.linalg.norm(a1 - a0)
    lb = np.linalg.norm(b1 - b0)
    bound = min(la, lb) / (2 * (n - 1))
    return est, bound


def chain_urdf(n_links, shapes=True, fixed_at=None):
    """n_links-1 revolute joints in a row, each link with a small capsule."""
    links, joints = [], []
    for i in range(n_links):
        coll = (
            '<collision><origin xyz="0 0 0.05"/>'
            '<geometry><cylinder radius="0.02" length="0.06"/></geometry></collision>'
            if shapes
            else ""
        )
        links.append(f'<link name="l{i}">{coll}</link>')
    for i in range(n_links - 1):
        kind = "fixed" if fixed_at == i else "revolute"
        limit = "" if kind == "fixed" else '<limit lower="-3" upper="3" velocity="2"/>'
        joints.append(
            f'<joint name="j{i}" type="{kind}"><parent link="l{i}"/><child link="l{i+1}"/>'
            f'<origin xyz="0 0 0.1"/><axis xyz="0 1 0"/>{limit}</joint>'
        )
    return f'<robot name="chain">{"".join(links)}{"".join(joints)}</robot>'


class TestBuildCollisionSet:
    def test_three_link_single_pair(self):
        m = load_urdf(chain_urdf(3))
        cs = build_collision_set(m)
        assert cs.check_pairs == [("l0", "l2")]

    def test_eight_shaped_links_21_pairs(self):
        m = load_urdf(chain_urdf(8))
        cs = build_collision_set(m)
        assert len(cs.check_pairs) == math.comb(8, 2) - 7

    def test_default_margin_two_centimeters(self, seven_dof):
        assert build_collision_set(seven_dof).margin == 0.02

    def test_fixed_joint_links_form_one_body(self):
        # l1-l2 welded: they are never paired, but index distance still counts
        m = load_urdf(chain_urdf(4, fixed_at=1))
        cs = build_collision_set(m)
        assert ("l1", "l2") not in cs.check_pairs
        assert ("l0", "l2") in cs.check_pairs
        assert ("l1", "l3") in cs.check_pairs

    def test_unshaped_links_yield_no_pairs(self):
        m = load_urdf(chain_urdf(4, shapes=False))
        assert build_collision_set(m).check_pairs == []


class TestSegmentDistance:
    def test_parallel_offset(self):
        d = segment_distance([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0])
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_perpendicular_skew(self):
        d = segment_distance([-1, 0, 0], [1, 0, 0], [0, -1, 0.3], [0, 1, 0.3])
        assert d == pytest.approx(0.3, abs=1e-12)

    def test_degenerate_points(self):
        assert segment_distance([0, 0, 0], [0, 0, 0], [1, 0, 0], [1, 0, 0]) == 1.0

    def test_intersecting(self):
        d = segment_distance([-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0])
        assert d == pytest.approx(0.0, abs=1e-12)

    def test_nonfinite(self):
        with pytest.raises(NonFiniteInput):
            segment_distance([np.nan, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0])

    def test_matches_sampling_oracle(self, rng):
        for _ in range(500):
            a0, a1, b0, b1 = rng.uniform(-1, 1, (4, 3))
            d = segment_distance(a0, a1, b0, b1)
            est, bound = sampling_oracle(a0, a1, b0, b1)
            assert d <= est + 1e-12
            assert d >= est - bound - 1e-6

    def test_symmetry(self, rng):
        for _ in range(200):
            a0, a1, b0, b1 = rng.uniform(-1, 1, (4, 3))
            assert segment_distance(a0, a1, b0, b1) == segment_distance(b0, b1, a0, a1)


class TestCheckSelfCollision:
    def test_spread_posture_clear(self, seven_dof):
        fk = forward_kinematics(seven_dof, np.zeros(7))
        report = check_self_collision(build_collision_set(seven_dof), fk.link_poses)
        assert not report.colliding
        assert report.min_clearance > 0.02

    def _folded_config(self, model):
        """Scan fold configs for a true overlap (oracle-verified)."""
        cs = build_collision_set(model)
        grid = np.linspace(-3.0, 3.0, 13)
        for q1 in grid:
            for q2 in grid:
                q = np.array([-3.0, q1, q2])
                fk = forward_kinematics(model, q)
                report = check_self_collision(cs, fk.link_poses)
                if report.min_clearance < 0.0:
                    return q, report
        raise AssertionError("no folded collision found in scan")

    def test_folded_chain_collides(self):
        model = load_urdf(chain_urdf(4))
        q, report = self._folded_config(model)
        assert report.colliding
        assert report.min_clearance < 0.0
        # confirm the overlap with the sampling oracle on the worst pair
        cs = build_collision_set(model)
        fk = forward_kinematics(model, q)
        la, lb = report.worst_pair
        sa = cs.shapes_per_link[la][0]
        sb = cs.shapes_per_link[lb][0]
        pa = fk.link_poses[cs.link_index[la]]
        pb = fk.link_poses[cs.link_index[lb]]

        def world(p, s):
            if isinstance(s, Sphere):
                return p.transform_point(s.center), p.transform_point(s.center), s.radius
            return p.transform_point(s.p0), p.transform_point(s.p1), s.radius

        a0, a1, ra = world(pa, sa)
        b0, b1, rb = world(pb, sb)
        est, bound = sampling_oracle(a0, a1, b0, b1)
        assert est - ra - rb < bound  # oracle agrees: truly overlapping

    def test_boundary_is_strict(self):
        m = load_urdf(chain_urdf(3))
        cs = build_collision_set(m, margin=0.02)
        # place l0 and l2 shapes so clearance is exactly margin - 1e-9
        gap = 0.02 + 0.02 + 0.02 - 1e-9  # radii + margin - epsilon
        poses = [
            Pose(np.eye(3), [0, 0, 0]),
            Pose(np.eye(3), [5, 0, 0]),  # park l1 far away (not in any pair)
            Pose(np.eye(3), [gap, 0, 0]),
        ]
        report = check_self_collision(cs, poses)
        assert report.min_clearance == pytest.approx(0.02 - 1e-9, abs=1e-12)
        assert report.colliding

    def test_missing_pose(self, seven_dof):
        cs = build_collision_set(seven_dof)
        with pytest.raises(MissingPose):
            check_self_collision(cs, [Pose.identity()] * 3)


class TestProperties:
    def test_rigid_invariance(self, seven_dof, rng):
        cs = build_collision_set(seven_dof)
        for _ in range(20):
            q = random_in_limit_q(seven_dof, rng)
            fk = forward_kinematics(seven_dof, q)
            base = check_self_collision(cs, fk.link_poses).min_clearance
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            G = Pose(rotation_about_axis(axis, rng.random() * 3), rng.uniform(-2, 2, 3))
            moved = [G.compose(p) for p in fk.link_poses]
            assert abs(check_self_collision(cs, moved).min_clearance - base) < 1e-9

    def test_radius_monotonicity(self, seven_dof, rng):
        cs = build_collision_set(seven_dof)
        q = random_in_limit_q(seven_dof, rng)
        fk = forward_kinematics(seven_dof, q)
        report = check_self_collision(cs, fk.link_poses)
        la, _ = report.worst_pair
        delta = 0.003
        shape = cs.shapes_per_link[la][0]
        shape.radius += delta
        try:
            inflated = check_self_collision(cs, fk.link_poses)
            assert inflated.min_clearance == pytest.approx(
                report.min_clearance - delta, abs=1e-12
            )
        finally:
            shape.radius -= delta

    def test_flag_matches_oracle_on_random_configs(self, seven_dof, rng):
        """Filtered oracle agreement away from the margin tie band."""
        cs = build_collision_set(seven_dof)
        checked = 0
        for _ in range(150):
            q = random_in_limit_q(seven_dof, rng)
            fk = forward_kinematics(seven_dof, q)
            report = check_self_collision(cs, fk.link_poses)
            if abs(report.min_clearance - cs.margin) <= 1e-4:
                continue
            oracle_min = math.inf
            worst_bound = 0.0
            for la, lb in cs.check_pairs:
                pa, pb = fk.link_poses[cs.link_index[la]], fk.link_poses[cs.link_index[lb]]
                for sa in cs.shapes_per_link[la]:
                    for sb in cs.shapes_per_link[lb]:
                        a0, a1, ra = _world(pa, sa)
                        b0, b1, rb = _world(pb, sb)
                        est, bound = sampling_oracle(a0, a1, b0, b1, n=1000)
                        if est - ra - rb < oracle_min:
                            oracle_min = est - ra - rb
                            worst_bound = bound
            if abs(oracle_min - cs.margin) <= worst_bound:
                continue
            assert (oracle_min < cs.margin) == report.colliding
            checked += 1
        assert checked > 100


def _world(p, s):
    if isinstance(s, Sphere):
        c = p.transform_point(s.center)
        return c, c, s.radius
    return p.transform_point(s.p0), p.transform_point(s.p1), s.radius


class TestStaticObstacles:
    def test_disabled_by_default(self, seven_dof):
        assert build_collision_set(seven_dof).obstacles == []

    def test_obstacle_near_link_reported(self):
        m = load_urdf(chain_urdf(3))
        wall = Sphere([0.0, 0.0, 0.05], 0.05)  # right on top of l0's capsule
        cs = build_collision_set(m, obstacles=[wall])
        poses = [
            Pose.identity(),
            Pose(np.eye(3), [5, 0, 0]),
            Pose(np.eye(3), [5, 0, 0.2]),
        ]
        report = check_self_collision(cs, poses)
        assert report.colliding
        assert report.worst_pair == ("l0", "obstacle[0]")
        # the same configuration is clean without the obstacle
        clean = check_self_collision(build_collision_set(m), poses)
        assert not clean.colliding


class TestShapes:
    def test_capsule_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            Capsule([0, 0, 0], [1, 0, 0], 0.0)

    def test_sphere_in_checks(self):
        m = load_urdf(chain_urdf(3))
        cs = build_collision_set(m)
        cs.shapes_per_link["l0"] = [Sphere([0, 0, 0], 0.05)]
        poses = [Pose.identity(), Pose(np.eye(3), [5, 0, 0]), Pose(np.eye(3), [0.2, 0, 0])]
        report = check_self_collision(cs, poses)
        # sphere (r=0.05) vs capsule at x=0.2 with z-span [0.02, 0.08], r=0.02
        seg_d = segment_distance([0, 0, 0], [0, 0, 0], [0.2, 0, 0.02], [0.2, 0, 0.08])
        assert report.min_clearance == pytest.approx(seg_d - 0.07, abs=1e-12)
