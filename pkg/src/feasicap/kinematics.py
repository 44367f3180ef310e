"""Kinematic chain loaded from a URDF subset: FK, Jacobian, DLS IK, manipulability.

Only single serial chains are supported (no branching, no mobile base).
Collision geometry is reduced to capsules and spheres when the chain is
loaded; meshes and boxes become bounding capsules along the link segment.
"""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace

import numpy as np

from .collision import Capsule, Sphere
from .errors import DimensionMismatch, FeasicapError, NonFiniteInput
from .geometry import Pose, axis_angle_from_rotation, rotation_about_axis, rpy_to_rotation

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"

# elements the parser understands; anything else in the document is ignored
# and reported on RobotModel.warnings
_SUPPORTED_JOINT_CHILDREN = {"origin", "axis", "limit", "parent", "child"}
_SUPPORTED_GEOMETRY = {"cylinder", "sphere"}


class MalformedDocument(FeasicapError):
    """The URDF cannot be parsed into a single serial chain."""


class BranchingChain(MalformedDocument):
    """A link on the path to the end-effector has more than one child joint."""


class MissingLimits(MalformedDocument):
    """An actuated joint lacks finite position limits or a velocity limit."""


@dataclass
class Joint:
    name: str
    kind: str  # revolute | prismatic | fixed
    axis: np.ndarray
    origin: Pose
    pos_limits: tuple[float, float] | None
    vel_limit: float | None
    parent: str
    child: str

    @property
    def actuated(self) -> bool:
        return self.kind in (REVOLUTE, PRISMATIC)


@dataclass
class Link:
    name: str
    collision_shapes: list = field(default_factory=list)


@dataclass
class RobotModel:
    """Serial chain, base to tip. Read-only after load; safe to share."""

    name: str
    joints: list[Joint]
    links: list[Link]
    ee_link: str
    dof: int
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._actuated = [i for i, j in enumerate(self.joints) if j.actuated]
        self.lower = np.array(
            [self.joints[i].pos_limits[0] for i in self._actuated], dtype=float
        )
        self.upper = np.array(
            [self.joints[i].pos_limits[1] for i in self._actuated], dtype=float
        )
        self.vel_limits = np.array(
            [self.joints[i].vel_limit for i in self._actuated], dtype=float
        )
        self.link_index = {l.name: i for i, l in enumerate(self.links)}

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise DimensionMismatch(f"expected {self.dof} joint values, got {q.shape[0]}")
        return q

    def mid_posture(self) -> np.ndarray:
        return (self.lower + self.upper) * 0.5

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)


@dataclass
class FkResult:
    link_poses: list[Pose]
    ee_pose: Pose


@dataclass
class IkParams:
    """DLS solver knobs. Defaults sized for a 60 Hz per-frame budget."""

    damping: float = 0.05
    max_iters: int = 50
    eps: float = 0.005          # combined-residual reachability threshold
    eps_pos: float = 0.002      # m
    eps_rot: float = math.radians(0.5)
    rot_weight: float = 0.1     # weight of orientation error in the residual
    nullspace_gain: float = 0.0  # optional attraction toward rest_posture
    rest_posture: np.ndarray | None = None
    fallback: bool = True       # retry once from mid-range when the warm
    # -started descent hits the iteration cap (branch-drift recovery)


@dataclass
class IkResult:
    q: np.ndarray
    residual: float
    iterations: int
    converged: bool
    pos_err: float
    rot_err: float


def _parse_floats(text: str, n: int, what: str) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.split()], dtype=float)
    except ValueError as exc:
        raise MalformedDocument(f"bad {what}: {text!r}") from exc
    if vals.shape[0] != n:
        raise MalformedDocument(f"{what} needs {n} values, got {vals.shape[0]}")
    return vals


def _parse_origin(elem) -> Pose:
    if elem is None:
        return Pose.identity()
    xyz = _parse_floats(elem.get("xyz", "0 0 0"), 3, "origin xyz")
    rpy = _parse_floats(elem.get("rpy", "0 0 0"), 3, "origin rpy")
    return Pose(rpy_to_rotation(*rpy), xyz)


def _parse_collision_shapes(link_elem, child_joint_offset, mesh_radius, warnings):
    shapes = []
    for coll in link_elem.findall("collision"):
        origin = _parse_origin(coll.find("origin"))
        geom = coll.find("geometry")
        if geom is None or len(geom) == 0:
            warnings.add("<collision> without geometry ignored")
            continue
        g = geom[0]
        if g.tag == "cylinder":
            radius = float(g.get("radius", "0"))
            length = float(g.get("length", "0"))
            if radius <= 0:
                raise MalformedDocument(
                    f"cylinder radius must be > 0 in link {link_elem.get('name')}"
                )
            half = np.array([0.0, 0.0, length * 0.5])
            shapes.append(
                Capsule(
                    origin.transform_point(-half),
                    origin.transform_point(half),
                    radius,
                )
            )
        elif g.tag == "sphere":
            radius = float(g.get("radius", "0"))
            if radius <= 0:
                raise MalformedDocument(
                    f"sphere radius must be > 0 in link {link_elem.get('name')}"
                )
            shapes.append(Sphere(origin.translation.copy(), radius))
        else:
            # mesh/box: bounding capsule spanning this link's segment
            warnings.add(f"<{g.tag}> collision geometry replaced by bounding capsule")
            end = child_joint_offset if child_joint_offset is not None else np.zeros(3)
            shapes.append(Capsule(np.zeros(3), end.copy(), mesh_radius))
    return shapes


def load_urdf(
    text: str,
    *,
    ee_link: str | None = None,
    mesh_capsule_radius: float = 0.05,
) -> RobotModel:
    """Parse a URDF document into a RobotModel.

    ee_link defaults to the unique leaf of the chain. Raises
    MalformedDocument / BranchingChain / MissingLimits per the contract;
    ignored elements are listed (deduplicated) on model.warnings.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedDocument(f"XML parse failure: {exc}") from exc
    if root.tag != "robot":
        raise MalformedDocument(f"root element is <{root.tag}>, expected <robot>")

    warnings: set[str] = set()
    link_elems: dict[str, ET.Element] = {}
    for child in root:
        if child.tag == "link":
            name = child.get("name")
            if not name:
                raise MalformedDocument("<link> without name")
            link_elems[name] = child
        elif child.tag == "joint":
            pass  # handled below
        else:
            warnings.add(f"<{child.tag}> element ignored")

    joints: dict[str, Joint] = {}
    for jel in root.findall("joint"):
        name = jel.get("name")
        kind = jel.get("type")
        if not name or not kind:
            raise MalformedDocument("<joint> without name or type")
        if kind == "continuous":
            kind = REVOLUTE  # will fail MissingLimits unless limits are given
        if kind not in (REVOLUTE, PRISMATIC, FIXED):
            raise MalformedDocument(f"joint {name}: unsupported type {kind!r}")
        parent_el = jel.find("parent")
        child_el = jel.find("child")
        if parent_el is None or child_el is None:
            raise MalformedDocument(f"joint {name}: missing parent/child")
        for sub in jel:
            if sub.tag not in _SUPPORTED_JOINT_CHILDREN:
                warnings.add(f"<{sub.tag}> element ignored")

        axis_el = jel.find("axis")
        axis = (
            _parse_floats(axis_el.get("xyz", "1 0 0"), 3, "axis")
            if axis_el is not None
            else np.array([1.0, 0.0, 0.0])
        )
        pos_limits = None
        vel_limit = None
        limit_el = jel.find("limit")
        if limit_el is not None:
            lo, hi = limit_el.get("lower"), limit_el.get("upper")
            if lo is not None and hi is not None:
                pos_limits = (float(lo), float(hi))
            vel = limit_el.get("velocity")
            if vel is not None:
                vel_limit = float(vel)

        if kind in (REVOLUTE, PRISMATIC):
            norm = float(np.linalg.norm(axis))
            if norm < 1e-12:
                raise MalformedDocument(f"joint {name}: zero axis")
            axis = axis / norm
            if pos_limits is None or not all(math.isfinite(v) for v in pos_limits):
                raise MissingLimits(f"joint {name}: finite position limits required")
            if pos_limits[0] >= pos_limits[1]:
                raise MissingLimits(f"joint {name}: lower limit must be < upper")
            if vel_limit is None or not math.isfinite(vel_limit) or vel_limit <= 0:
                raise MissingLimits(f"joint {name}: positive velocity limit required")

        joints[name] = Joint(
            name=name,
            kind=kind,
            axis=axis,
            origin=_parse_origin(jel.find("origin")),
            pos_limits=pos_limits,
            vel_limit=vel_limit,
            parent=parent_el.get("link"),
            child=child_el.get("link"),
        )

    if not link_elems:
        raise MalformedDocument("document has no links")
    for j in joints.values():
        for ln in (j.parent, j.child):
            if ln not in link_elems:
                raise MalformedDocument(f"joint {j.name} references unknown link {ln!r}")

    children_of: dict[str, list[Joint]] = {}
    child_links = set()
    for j in joints.values():
        children_of.setdefault(j.parent, []).append(j)
        if j.child in child_links:
            raise MalformedDocument(f"link {j.child} has two parent joints")
        child_links.add(j.child)
    roots = [name for name in link_elems if name not in child_links]
    if len(roots) != 1:
        raise MalformedDocument(f"expected one root link, found {roots}")
    base = roots[0]

    # walk base -> ee, rejecting branches on the path
    chain: list[Joint] = []
    current = base
    while True:
        if ee_link is not None and current == ee_link:
            break
        nxt = children_of.get(current, [])
        if not nxt:
            if ee_link is not None:
                raise MalformedDocument(
                    f"no chain from {base!r} to declared end-effector {ee_link!r}"
                )
            break
        if len(nxt) > 1:
            raise BranchingChain(
                f"link {current!r} has {len(nxt)} child joints on the end-effector path"
            )
        chain.append(nxt[0])
        current = nxt[0].child
    resolved_ee = ee_link if ee_link is not None else current
    if not chain:
        raise MalformedDocument("chain has no joints")

    ordered_links: list[Link] = []
    chain_link_names = [base] + [j.child for j in chain]
    for idx, lname in enumerate(chain_link_names):
        child_offset = chain[idx].origin.translation if idx < len(chain) else None
        shapes = _parse_collision_shapes(
            link_elems[lname], child_offset, mesh_capsule_radius, warnings
        )
        for sub in link_elems[lname]:
            if sub.tag != "collision":
                warnings.add(f"<{sub.tag}> element ignored")
        ordered_links.append(Link(lname, shapes))
    for lname in link_elems:
        if lname not in chain_link_names:
            warnings.add(f"link <{lname}> outside the end-effector chain ignored")

    dof = sum(1 for j in chain if j.actuated)
    return RobotModel(
        name=root.get("name", "robot"),
        joints=chain,
        links=ordered_links,
        ee_link=resolved_ee,
        dof=dof,
        warnings=sorted(warnings),
    )


def _frames_raw(model: RobotModel, q: np.ndarray):
    """Rotation/translation arrays per link and per joint frame.

    Raw-array version of the FK walk: this is the IK inner loop, so it
    avoids Pose allocation entirely. Returns (link_R, link_p, joint_R,
    joint_p), with link index 0 being the base link.
    """
    n_links = len(model.joints) + 1
    link_R = [np.eye(3)]
    link_p = [np.zeros(3)]
    joint_R = []
    joint_p = []
    R = link_R[0]
    p = link_p[0]
    k = 0
    for joint in model.joints:
        o = joint.origin
        jR = R @ o.rotation
        jp = R @ o.translation + p
        joint_R.append(jR)
        joint_p.append(jp)
        if joint.kind == REVOLUTE:
            R = jR @ rotation_about_axis(joint.axis, q[k])
            p = jp
            k += 1
        elif joint.kind == PRISMATIC:
            R = jR
            p = jR @ (joint.axis * q[k]) + jp
            k += 1
        else:
            R = jR
            p = jp
        link_R.append(R)
        link_p.append(p)
    return link_R, link_p, joint_R, joint_p


def _jacobian_from_frames(model: RobotModel, link_p, joint_R, joint_p) -> np.ndarray:
    p_ee = link_p[model.link_index[model.ee_link]]
    J = np.zeros((6, model.dof))
    col = 0
    for i, joint in enumerate(model.joints):
        if not joint.actuated:
            continue
        z = joint_R[i] @ joint.axis
        if joint.kind == REVOLUTE:
            d = p_ee - joint_p[i]
            J[0, col] = z[1] * d[2] - z[2] * d[1]
            J[1, col] = z[2] * d[0] - z[0] * d[2]
            J[2, col] = z[0] * d[1] - z[1] * d[0]
            J[3:, col] = z
        else:
            J[:3, col] = z
        col += 1
    return J


def forward_kinematics(model: RobotModel, q) -> FkResult:
    """Poses of every chain link in the base frame, plus the ee pose."""
    q = model.check_q(q)
    link_R, link_p, _, _ = _frames_raw(model, q)
    link_poses = [Pose(r, p) for r, p in zip(link_R, link_p)]
    return FkResult(link_poses, link_poses[model.link_index[model.ee_link]])


def jacobian(model: RobotModel, q) -> np.ndarray:
    """6 x dof geometric Jacobian at the EE point, linear rows then angular."""
    q = model.check_q(q)
    _, link_p, joint_R, joint_p = _frames_raw(model, q)
    return _jacobian_from_frames(model, link_p, joint_R, joint_p)


def dls_ik(model: RobotModel, target: Pose, q_seed, params: IkParams | None = None) -> IkResult:
    """Damped-least-squares IK from q_seed toward target.

    Iterates dq = J^T (J J^T + damping^2 I)^-1 e_twist, clamping every
    iterate to the position limits. Convergence (the reachability verdict)
    means both split tolerances hold: pos_err < eps_pos and rot_err <
    eps_rot. The returned residual is ||(dp, rot_weight * dtheta)||.

    When a warm-started descent stalls at the iteration cap (the seed
    drifted onto a bad redundancy branch), one fallback descent from the
    mid-range posture runs; callers see the better of the two. Successful
    fallbacks show up as configuration jumps, which the guidance layer
    flags rather than hides.
    """
    if params is None:
        params = IkParams()
    q = model.check_q(q_seed)
    if not np.isfinite(q).all():
        raise NonFiniteInput("IK seed contains NaN/Inf")
    if not target.is_finite():
        raise NonFiniteInput("IK target contains NaN/Inf")

    if params.fallback:
        # max_iters is the whole per-frame budget: the warm descent gets
        # half, the fallback descent the remainder
        first = replace(params, max_iters=params.max_iters // 2)
        res = _dls_descend(model, target, q, first)
        if not res.converged:
            second = replace(params, max_iters=params.max_iters - res.iterations)
            retry = _dls_descend(model, target, model.mid_posture(), second)
            retry.iterations += res.iterations
            if retry.converged or retry.residual < res.residual:
                res = retry
        return res
    return _dls_descend(model, target, q, params)


def _dls_descend(model: RobotModel, target: Pose, q: np.ndarray, params: IkParams) -> IkResult:
    q = model.clamp(q.copy())
    lam2 = params.damping * params.damping
    ee_idx = model.link_index[model.ee_link]
    tR = target.rotation
    tp = target.translation

    iterations = 0
    while True:
        link_R, link_p, joint_R, joint_p = _frames_raw(model, q)
        dp = tp - link_p[ee_idx]
        dth = axis_angle_from_rotation(tR @ link_R[ee_idx].T)
        pos_err = float(math.sqrt(dp @ dp))
        rot_err = float(math.sqrt(dth @ dth))
        residual = math.hypot(pos_err, params.rot_weight * rot_err)
        if pos_err < params.eps_pos and rot_err < params.eps_rot:
            return IkResult(q, residual, iterations, True, pos_err, rot_err)
        if iterations >= params.max_iters:
            return IkResult(q, residual, iterations, False, pos_err, rot_err)

        J = _jacobian_from_frames(model, link_p, joint_R, joint_p)
        JJt = J @ J.T
        JJt.flat[::7] += lam2  # add damping on the diagonal in place
        twist = np.concatenate([dp, dth])
        dq = J.T @ np.linalg.solve(JJt, twist)
        if params.nullspace_gain > 0.0 and params.rest_posture is not None:
            pinv = J.T @ np.linalg.solve(JJt, J)
            dq = dq + params.nullspace_gain * (
                (np.eye(model.dof) - pinv) @ (params.rest_posture - q)
            )
        q = model.clamp(q + dq)
        iterations += 1


def manipulability(J: np.ndarray) -> float:
    """Product of the min(rows, cols) singular values: sqrt(det(J J^T)) for
    wide Jacobians. Snaps to 0.0 below 1e-12 (rank-deficient / underflow).
    """
    J = np.asarray(J, dtype=float)
    if not np.isfinite(J).all():
        raise NonFiniteInput("Jacobian contains NaN/Inf")
    s = np.linalg.svd(J, compute_uv=False)
    w = float(np.prod(s))
    return w if w > 1e-12 else 0.0
