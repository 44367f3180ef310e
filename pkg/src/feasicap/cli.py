"""Operator entry points: serve, analyze, replay, profile, simulate.

Exit codes: 0 ok, 2 config problem, 3 network problem, 4 data problem.
All commands are deterministic given config + seeds, except wall-clock
fields (compute_micros, recorded wall times).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .demosim import ReactionModel, closed_loop_run, default_profile
from .discovery import NoNetwork, PortInUse
from .episodes import (
    MissingChannel,
    SchemaMismatch,
    compute_stats,
    export_timeline,
    read_episode,
)
from .geometry import Pose, rot_y
from .guidance import GuidanceConfig, GuidanceSession, TrackerFrame
from .kinematics import IkParams, MalformedDocument, load_urdf
from .mcapfile import CorruptFile
from .replay import FrameRemap, SimulatedRobot, execute, resample_and_clamp, retarget
from .server import FeasicapServer, ServerConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NETWORK = 3
EXIT_DATA = 4

FRAME_BUDGET_MS = 16.7  # 60 Hz deadline


def bundled_urdf(name: str = "seven_dof_arm") -> str:
    return (resources.files("feasicap") / "data" / f"{name}.urdf").read_text()


def _load_model(args, cfg: dict):
    robot_cfg = cfg.get("robot", {})
    urdf_path = getattr(args, "urdf", None) or robot_cfg.get("urdf")
    ee_link = robot_cfg.get("ee_link")
    if urdf_path is None:
        return load_urdf(bundled_urdf(), ee_link=ee_link)
    path = Path(urdf_path)
    if not path.exists():
        raise FileNotFoundError(f"URDF not found: {path}")
    return load_urdf(path.read_text(), ee_link=ee_link)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config not found: {p}")
    try:
        return tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{p}: {exc}") from exc


def _guidance_config(cfg: dict) -> GuidanceConfig:
    g = cfg.get("guidance", {})
    ik = cfg.get("ik", {})
    params = IkParams(
        damping=ik.get("damping", 0.05),
        max_iters=ik.get("max_iters", 50),
        eps=ik.get("eps", 0.005),
        eps_pos=ik.get("eps_pos", 0.002),
        eps_rot=math.radians(ik.get("eps_rot_deg", 0.5)),
        rot_weight=ik.get("rot_weight", 0.1),
    )
    return GuidanceConfig(
        tau_r=g.get("tau_r", 0.8),
        tau_w=g.get("tau_w", 0.01),
        rate_window=g.get("rate_window", 5),
        debounce_frames=g.get("debounce_frames", 3),
        margin=g.get("margin", 0.02),
        rate_smoothing=g.get("rate_smoothing", "mean"),
        ik_params=params,
    )


# ------------------------------------------------------------------ serve

def cmd_serve(args) -> int:
    try:
        cfg = _load_config(args.config)
        model = _load_model(args, cfg)
    except (FileNotFoundError, ValueError, MalformedDocument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    srv_cfg = cfg.get("server", {})
    rep_cfg = cfg.get("replay", {})
    config = ServerConfig(
        model=model,
        guidance=_guidance_config(cfg),
        host=srv_cfg.get("host", "127.0.0.1"),
        stream_port=args.stream_port
        if args.stream_port is not None
        else srv_cfg.get("stream_port", 0),
        http_port=args.http_port
        if args.http_port is not None
        else srv_cfg.get("http_port", 0),
        beacon_port=srv_cfg.get("beacon_port", 48653),
        enable_mdns=srv_cfg.get("enable_mdns", True),
        data_dir=args.data_dir or srv_cfg.get("data_dir", "episodes"),
        episode_format=srv_cfg.get("episode_format", "mcap"),
        autorecord=srv_cfg.get("autorecord", True),
        replay_realtime=rep_cfg.get("realtime", False),
        replay_trans_limit=rep_cfg.get("trans_limit", 0.25),
        replay_rot_limit=rep_cfg.get("rot_limit", 0.5),
    )
    try:
        server = FeasicapServer(config).start()
    except PortInUse as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except NoNetwork as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK

    print(
        f"feasicap serving: stream={config.host}:{server.stream_port} "
        f"http={config.host}:{server.http_port} data={config.data_dir}",
        flush=True,
    )
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def cmd_analyze(args) -> int:
    path = Path(args.episode)
    if not path.exists():
        print(f"data error: episode not found: {path}", file=sys.stderr)
        return EXIT_DATA
    try:
        episode = read_episode(path)
        stats = compute_stats(episode)
    except (CorruptFile, SchemaMismatch, MissingChannel) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA

    out_dir = Path(args.out) if args.out else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    (out_dir / f"{stem}.stats.json").write_text(json.dumps(stats.to_json(), indent=2))
    export_timeline(
        episode,
        csv_path=out_dir / f"{stem}.timeline.csv",
        svg_path=out_dir / f"{stem}.timeline.svg",
    )
    print(
        f"{episode.id}: {stats.total_frames} frames, "
        f"infeasible {stats.infeasible_ratio:.1%}, warning {stats.warning_ratio:.1%}, "
        f"longest infeasible run {stats.longest_infeasible_run}"
    )
    return EXIT_OK


# ----------------------------------------------------------------- replay

def cmd_replay(args) -> int:
    from .packets import decode_frame_packet
    from .episodes import CH_POSE

    try:
        cfg = _load_config(args.config)
        model = _load_model(args, cfg)
    except (FileNotFoundError, ValueError, MalformedDocument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = Path(args.episode)
    if not path.exists():
        print(f"data error: episode not found: {path}", file=sys.stderr)
        return EXIT_DATA
    try:
        episode = read_episode(path)
        poses, ts = [], []
        for m in episode.channel(CH_POSE):
            packet, _ = decode_frame_packet(m.data)
            poses.append(Pose.from_matrix(packet.pose))
            ts.append(packet.tracker_timestamp)
    except (CorruptFile, SchemaMismatch, MissingChannel) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not poses:
        print("data error: episode has no pose frames", file=sys.stderr)
        return EXIT_DATA

    ts0 = ts[0]
    ts = [(t - ts0) / args.speed_scale for t in ts]
    robot = SimulatedRobot(model)
    anchor = robot.tcp_pose
    plan = resample_and_clamp(retarget(poses, anchor, FrameRemap()), ts, anchor=anchor)
    report = execute(plan, robot)
    doc = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    print(
        f"replayed {len(plan)} ticks: success={report.success} "
        f"max_tcp_error={report.max_tcp_error * 1000:.2f}mm "
        f"infeasible_ticks={len(report.infeasible_ticks)}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- profile

def _profile_trajectory(model, k: int) -> Pose:
    """Smooth non-singular EE path for throughput measurement."""
    t = k / 60.0
    center = np.array([0.38, 0.0, 0.42])
    offset = np.array(
        [
            0.06 * math.sin(0.9 * t),
            0.10 * math.sin(0.7 * t + 1.0),
            0.06 * math.sin(1.1 * t + 2.0),
        ]
    )
    return Pose(rot_y(math.pi / 2 + 0.2 * math.sin(0.5 * t)), center + offset)


def simulate_drops(
    compute_micros, period_micros=FRAME_BUDGET_MS * 1000.0, queue_depth: int = 3
) -> int:
    """Dropped frames under a small capture ring buffer at 60 Hz.

    Frames arrive on the 60 Hz grid; one executes while up to queue_depth
    wait (camera stacks hold a few buffers). A frame is dropped when a new
    arrival displaces the oldest waiting frame, i.e. when the pipeline
    falls more than queue_depth periods behind. Sustained overload (mean
    cost above the period) always drops; isolated scheduler blips shorter
    than the buffer do not.
    """
    from collections import deque

    t_free = 0.0
    pending: deque = deque()
    dropped = 0
    for k, cost in enumerate(compute_micros):
        arrival = k * period_micros
        while pending and t_free <= arrival:
            a, c = pending.popleft()
            t_free = max(t_free, a) + c
        if arrival >= t_free:
            t_free = arrival + cost
        elif len(pending) < queue_depth:
            pending.append((arrival, cost))
        else:
            dropped += 1
            pending.popleft()  # latest-value: the oldest waiting frame dies
            pending.append((arrival, cost))
    return dropped


def run_profile(model, config: GuidanceConfig, frames: int):
    # retain=False: accumulating 2880 outputs distorts gen-2 GC pause times
    session = GuidanceSession(model, config, retain=False)
    session.calibrate(Pose.identity(), Pose.identity())
    session.set_base_anchor(Pose.identity())
    stage_names = ("pose", "ik", "fk", "collision", "state")
    stages = {name: [] for name in stage_names}
    totals = []
    for k in range(frames):
        frame = TrackerFrame(_profile_trajectory(model, k), k / 60.0, k / 60.0)
        out = session.process_frame(frame)
        totals.append(out.compute_micros)
        for name in stage_names:
            stages[name].append(out.stage_micros[name])
    dropped = simulate_drops(totals)
    return {
        "frames": frames,
        "dropped": dropped,
        "total_ms": {
            "mean": float(np.mean(totals)) / 1000.0,
            "p99": float(np.percentile(totals, 99)) / 1000.0,
            "max": float(np.max(totals)) / 1000.0,
        },
        "stages_us": {
            name: {
                "mean": float(np.mean(vals)),
                "p99": float(np.percentile(vals, 99)),
                "max": float(np.max(vals)),
            }
            for name, vals in stages.items()
        },
    }


def cmd_profile(args) -> int:
    try:
        cfg = _load_config(args.config)
        model = _load_model(args, cfg)
    except (FileNotFoundError, ValueError, MalformedDocument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_profile(model, _guidance_config(cfg), args.frames)
    total = report["total_ms"]
    print(f"profiled {report['frames']} frames on {model.name} (dof={model.dof})")
    print(f"  dropped frames : {report['dropped']}")
    print(
        f"  per-frame total: mean {total['mean']:.3f} ms, "
        f"p99 {total['p99']:.3f} ms, max {total['max']:.3f} ms (budget {FRAME_BUDGET_MS} ms)"
    )
    print("  stage          mean        p99        max  (us)")
    for name, s in report["stages_us"].items():
        print(f"  {name:<10} {s['mean']:>9.1f} {s['p99']:>10.1f} {s['max']:>10.1f}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    return EXIT_OK


# --------------------------------------------------------------- simulate

def run_simulate(model, config: GuidanceConfig, task: str, guided: bool, seeds):
    ratios = []
    for seed in seeds:
        profile = default_profile(task)
        session = GuidanceSession(model, config)
        session.calibrate(Pose.identity(), Pose.identity())
        session.set_base_anchor(Pose.identity())
        reaction = ReactionModel(attends=guided)
        result = closed_loop_run(profile, reaction, session, seed)
        states = [o.state.value for o in result.outputs]
        ratios.append(states.count("infeasible") / len(states))
    return ratios


def cmd_simulate(args) -> int:
    try:
        cfg = _load_config(args.config)
        model = _load_model(args, cfg)
    except (FileNotFoundError, ValueError, MalformedDocument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    config = _guidance_config(cfg)
    tasks = ["pick_place", "toss"] if args.task == "both" else [args.task]
    conditions = (
        [("guided", True), ("unguided", False)]
        if args.guided == "both"
        else [("guided" if args.guided == "on" else "unguided", args.guided == "on")]
    )
    seeds = list(range(args.seed0, args.seed0 + args.seeds))
    results = {}
    print(f"{'task':<12} {'condition':<10} {'runs':>4}   infeasible ratio")
    for task in tasks:
        for label, guided in conditions:
            ratios = run_simulate(model, config, task, guided, seeds)
            mean = float(np.mean(ratios))
            sd = float(np.std(ratios))
            results[f"{task}/{label}"] = {"mean": mean, "sd": sd, "ratios": ratios}
            print(f"{task:<12} {label:<10} {len(ratios):>4}   {mean:.3f} +/- {sd:.3f}")
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feasicap",
        description="Demonstration feasibility guidance service and tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run discovery + stream + control API")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--urdf", help="robot URDF path (default: bundled 7-dof arm)")
    p.add_argument("--data-dir", help="episode directory")
    p.add_argument("--stream-port", type=int, default=None)
    p.add_argument("--http-port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("analyze", help="episode stats + timeline files")
    p.add_argument("--episode", required=True, help="episode file (.mcap/.ndjson)")
    p.add_argument("--out", help="output directory (default: alongside episode)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("replay", help="replay an episode on the simulated arm")
    p.add_argument("--episode", required=True)
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--urdf", help="robot URDF path")
    p.add_argument("--speed-scale", type=float, default=1.0)
    p.add_argument("--out", help="write the JSON execution report here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("profile", help="per-stage latency over a synthetic run")
    p.add_argument("--frames", type=int, default=2880)
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--urdf", help="robot URDF path")
    p.add_argument("--out", help="write the JSON latency report here")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="guided vs unguided batch comparison")
    p.add_argument("--task", choices=["pick_place", "toss", "both"], default="both")
    p.add_argument("--guided", choices=["on", "off", "both"], default="both")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per cell")
    p.add_argument("--seed0", type=int, default=0, help="first seed")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--urdf", help="robot URDF path")
    p.add_argument("--out", help="write JSON results here")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
