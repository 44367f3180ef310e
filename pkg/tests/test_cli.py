import json
import socket

import pytest

from feasicap.cli import main
from feasicap.demosim import ReactionModel, closed_loop_run, default_profile
from feasicap.episodes import write_episode
from feasicap.geometry import Pose
from feasicap.guidance import GuidanceConfig, GuidanceSession


@pytest.fixture
def episode_file(seven_dof, tmp_path):
    session = GuidanceSession(seven_dof, GuidanceConfig())
    session.calibrate(Pose.identity(), Pose.identity())
    session.set_base_anchor(Pose.identity())
    res = closed_loop_run(
        default_profile("pick_place"), ReactionModel(attends=True), session, 0
    )
    path = tmp_path / f"{res.episode.id}.mcap"
    write_episode(res.episode, path)
    return path


class TestAnalyze:
    def test_writes_stats_and_timeline(self, episode_file, tmp_path, capsys):
        out = tmp_path / "analysis"
        code = main(["analyze", "--episode", str(episode_file), "--out", str(out)])
        assert code == 0
        stem = episode_file.stem
        stats = json.loads((out / f"{stem}.stats.json").read_text())
        assert stats["total_frames"] > 0
        csv_lines = (out / f"{stem}.timeline.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "frame,state,e,r,c,w"
        assert len(csv_lines) == stats["total_frames"] + 1
        assert (out / f"{stem}.timeline.svg").read_text().startswith("<svg")
        assert "frames" in capsys.readouterr().out

    def test_missing_episode_exit_4(self, tmp_path, capsys):
        code = main(["analyze", "--episode", str(tmp_path / "nope.mcap")])
        assert code == 4

    def test_corrupt_episode_exit_4(self, tmp_path):
        bad = tmp_path / "bad.mcap"
        bad.write_bytes(b"not an mcap file")
        assert main(["analyze", "--episode", str(bad)]) == 4


class TestReplayCmd:
    def test_replay_writes_report(self, episode_file, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = main(
            ["replay", "--episode", str(episode_file), "--out", str(report_path)]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert set(report) >= {"success", "ticks", "max_tcp_error", "infeasible_ticks"}
        assert "replayed" in capsys.readouterr().out


class TestProfileCmd:
    def test_small_profile_run(self, tmp_path, capsys):
        out = tmp_path / "laten.json"
        code = main(["profile", "--frames", "120", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["frames"] == 120
        assert set(report["stages_us"]) == {"pose", "ik", "fk", "collision", "state"}
        text = capsys.readouterr().out
        assert "dropped frames" in text


class TestSimulateCmd:
    def test_smoke_table(self, capsys):
        code = main(
            ["simulate", "--task", "pick_place", "--guided", "on", "--seeds", "1"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "pick_place" in out and "guided" in out


class TestServeErrors:
    def test_invalid_urdf_path_exit_2(self, capsys):
        code = main(["serve", "--urdf", "/nonexistent/robot.urdf"])
        assert code == 2
        assert "/nonexistent/robot.urdf" in capsys.readouterr().err

    def test_port_collision_exit_3(self, tmp_path, capsys):
        blocker = socket.create_server(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            code = main(
                [
                    "serve",
                    "--stream-port", str(port),
                    "--data-dir", str(tmp_path / "eps"),
                ]
            )
            assert code == 3
            assert "network error" in capsys.readouterr().err
        finally:
            blocker.close()

    def test_bad_config_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("this is [not toml")
        assert main(["profile", "--frames", "1", "--config", str(cfg)]) == 2
