"""Self-collision checks on non-adjacent link pairs using capsules and spheres.

Pair counts on serial arms are a few dozen, so the narrowphase is plain
segment-segment distance with no broadphase. Distances use scalar float
arithmetic (not numpy) because 3-vector numpy ops cost more than the math.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FeasicapError, NonFiniteInput


class MissingPose(FeasicapError):
    """check_self_collision was given no pose for a link it must check."""


@dataclass
class Capsule:
    """Segment p0-p1 swept by a sphere of the given radius (link frame, m).

    p0 == p1 degenerates to a sphere.
    """

    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float).reshape(3)
        self.p1 = np.asarray(self.p1, dtype=float).reshape(3)
        if self.radius <= 0:
            raise ValueError("capsule radius must be > 0")


@dataclass
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if self.radius <= 0:
            raise ValueError("sphere radius must be > 0")


def _as_segment(shape):
    if isinstance(shape, Sphere):
        return shape.center, shape.center, shape.radius
    return shape.p0, shape.p1, shape.radius


@dataclass
class CollisionSet:
    """Immutable pairing of link shapes to check, built from a model.

    obstacles is an extension beyond self-collision: optional static
    world-frame shapes every shaped link is checked against. Off unless
    filled in explicitly.
    """

    shapes_per_link: dict[str, list]
    check_pairs: list[tuple[str, str]]
    margin: float
    link_index: dict[str, int] = field(default_factory=dict)
    obstacles: list = field(default_factory=list)


@dataclass
class CollisionReport:
    colliding: bool
    min_clearance: float
    worst_pair: tuple[str, str] | None


def build_collision_set(model, margin: float = 0.02, obstacles=None) -> CollisionSet:
    """Enumerate link pairs with chain distance >= 2 where both carry shapes.

    Links joined by fixed joints form one rigid body and are never paired
    with each other; chain distance is the raw link index difference.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    # rigid-body id per link: a fixed joint keeps its child in the parent's body
    body = [0]
    for joint in model.joints:
        body.append(body[-1] if joint.kind == "fixed" else body[-1] + 1)

    names = [l.name for l in model.links]
    shaped = {l.name: l.collision_shapes for l in model.links if l.collision_shapes}
    pairs = []
    for i in range(len(names)):
        for j in range(i + 2, len(names)):
            if body[i] == body[j]:
                continue
            if names[i] in shaped and names[j] in shaped:
                pairs.append((names[i], names[j]))
    return CollisionSet(
        shapes_per_link=shaped,
        check_pairs=pairs,
        margin=margin,
        link_index={l.name: i for i, l in enumerate(model.links)},
        obstacles=list(obstacles or []),
    )


def segment_distance(a0, a1, b0, b1) -> float:
    """Minimum Euclidean distance between closed segments a0-a1 and b0-b1.

    Exactly symmetric in its two segments: arguments are put in a canonical
    order before computing, so float rounding cannot differ between
    distance(A, B) and distance(B, A).
    """
    sa = (float(a0[0]), float(a0[1]), float(a0[2]),
          float(a1[0]), float(a1[1]), float(a1[2]))
    sb = (float(b0[0]), float(b0[1]), float(b0[2]),
          float(b1[0]), float(b1[1]), float(b1[2]))
    if not all(math.isfinite(v) for v in sa + sb):
        raise NonFiniteInput("segment endpoints contain NaN/Inf")
    if sb < sa:
        sa, sb = sb, sa
    ax0, ay0, az0, ax1, ay1, az1 = sa
    bx0, by0, bz0, bx1, by1, bz1 = sb
    dax = ax1 - ax0
    day = ay1 - ay0
    daz = az1 - az0
    dbx = bx1 - bx0
    dby = by1 - by0
    dbz = bz1 - bz0
    rx = ax0 - bx0
    ry = ay0 - by0
    rz = az0 - bz0

    a = dax * dax + day * day + daz * daz
    e = dbx * dbx + dby * dby + dbz * dbz
    f = dbx * rx + dby * ry + dbz * rz

    # Ericson, Real-Time Collision Detection 5.1.9 (closest points of two segments)
    if a <= 1e-18 and e <= 1e-18:
        s = t = 0.0
    elif a <= 1e-18:
        s = 0.0
        t = min(1.0, max(0.0, f / e))
    else:
        c = dax * rx + day * ry + daz * rz
        if e <= 1e-18:
            t = 0.0
            s = min(1.0, max(0.0, -c / a))
        else:
            b = dax * dbx + day * dby + daz * dbz
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))

    dx = rx + s * dax - t * dbx
    dy = ry + s * day - t * dby
    dz = rz + s * daz - t * dbz
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _world_segment(pose, shape):
    p0, p1, r = _as_segment(shape)
    rot = pose.rotation
    tr = pose.translation
    return rot @ p0 + tr, rot @ p1 + tr, r


def check_self_collision(cset: CollisionSet, link_poses) -> CollisionReport:
    """Min clearance over all check pairs; colliding iff clearance < margin."""
    min_clearance = math.inf
    worst = None
    for name_a, name_b in cset.check_pairs:
        ia = cset.link_index.get(name_a)
        ib = cset.link_index.get(name_b)
        if ia is None or ib is None or ia >= len(link_poses) or ib >= len(link_poses):
            raise MissingPose(f"no pose for pair ({name_a}, {name_b})")
        pose_a = link_poses[ia]
        pose_b = link_poses[ib]
        if pose_a is None or pose_b is None:
            raise MissingPose(f"no pose for pair ({name_a}, {name_b})")
        for sa in cset.shapes_per_link[name_a]:
            a0, a1, ra = _world_segment(pose_a, sa)
            for sb in cset.shapes_per_link[name_b]:
                b0, b1, rb = _world_segment(pose_b, sb)
                clearance = segment_distance(a0, a1, b0, b1) - ra - rb
                if clearance < min_clearance:
                    min_clearance = clearance
                    worst = (name_a, name_b)
    if cset.obstacles:
        # environment extension: every shaped link vs each static shape
        for name, shapes in cset.shapes_per_link.items():
            idx = cset.link_index.get(name)
            if idx is None or idx >= len(link_poses) or link_poses[idx] is None:
                raise MissingPose(f"no pose for link {name}")
            pose = link_poses[idx]
            for s in shapes:
                a0, a1, ra = _world_segment(pose, s)
                for k, obstacle in enumerate(cset.obstacles):
                    b0, b1, rb = _as_segment(obstacle)
                    clearance = segment_distance(a0, a1, b0, b1) - ra - rb
                    if clearance < min_clearance:
                        min_clearance = clearance
                        worst = (name, f"obstacle[{k}]")
    return CollisionReport(
        colliding=bool(min_clearance < cset.margin),
        min_clearance=min_clearance,
        worst_pair=worst,
    )
