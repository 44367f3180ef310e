"""Real-time demonstration feasibility guidance against a robot model."""

from .collision import (
    Capsule,
    CollisionReport,
    CollisionSet,
    Sphere,
    build_collision_set,
    check_self_collision,
    segment_distance,
)
from .geometry import Pose
from .guidance import (
    Debouncer,
    GuidanceConfig,
    GuidanceOutput,
    GuidanceSession,
    State,
    TrackerFrame,
    calibrate,
    rate_ratio,
)
from .kinematics import (
    IkParams,
    IkResult,
    RobotModel,
    dls_ik,
    forward_kinematics,
    jacobian,
    load_urdf,
    manipulability,
)
from .packets import FramePacket, decode_frame_packet, encode_frame_packet
from .episodes import (
    Episode,
    EpisodeWriter,
    compute_stats,
    export_timeline,
    read_episode,
    write_episode,
)
from .replay import (
    FrameRemap,
    ReplayPlan,
    SimulatedRobot,
    execute,
    resample_and_clamp,
    retarget,
)

__version__ = "0.1.0"

__all__ = [
    "Capsule",
    "CollisionReport",
    "CollisionSet",
    "Debouncer",
    "Episode",
    "EpisodeWriter",
    "FramePacket",
    "FrameRemap",
    "GuidanceConfig",
    "GuidanceOutput",
    "GuidanceSession",
    "IkParams",
    "IkResult",
    "Pose",
    "ReplayPlan",
    "RobotModel",
    "SimulatedRobot",
    "Sphere",
    "State",
    "TrackerFrame",
    "build_collision_set",
    "calibrate",
    "check_self_collision",
    "compute_stats",
    "decode_frame_packet",
    "dls_ik",
    "encode_frame_packet",
    "execute",
    "export_timeline",
    "forward_kinematics",
    "jacobian",
    "load_urdf",
    "manipulability",
    "rate_ratio",
    "read_episode",
    "resample_and_clamp",
    "retarget",
    "segment_distance",
    "write_episode",
]
