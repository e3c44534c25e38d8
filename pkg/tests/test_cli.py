"""Command-line interface: exit codes, config resolution and persistence,
artifact layout, and reproducibility of seeded runs."""

import json
import shutil

import numpy as np
import pytest

from splat4d.cli import main
from splat4d.scene_io import load_checkpoint, load_dataset


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("clids") / "ds"
    code = main(["synth", "--preset", "three-blobs", "--out", str(root),
                 "--cameras", "3", "--timesteps", "3", "--size", "24x24"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def run(tmp_path_factory, ds):
    out = tmp_path_factory.mktemp("clirun") / "run"
    code = main(["train", "--data", str(ds), "--out", str(out),
                 "--iters", "3", "--seed", "5", "--init-count", "12",
                 "--holdout-interval", "2"])
    assert code == 0
    return out


class TestUsageErrors:
    def test_no_command(self, capsys):
        assert main([]) == 2

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_train_requires_data(self, capsys, tmp_path):
        assert main(["train", "--out", str(tmp_path / "x")]) == 2
        assert "--data is required" in capsys.readouterr().err

    def test_train_requires_out(self, capsys):
        assert main(["train", "--data", "whatever"]) == 2

    def test_unknown_flag(self, capsys):
        assert main(["synth", "--preset", "three-blobs", "--out", "x",
                     "--bogus", "1"]) == 2

    def test_bad_t_range_syntax(self, capsys):
        assert main(["render", "--ckpt", "c.g4ds", "--pose", "p.json",
                     "--t-range", "0..1..5"]) == 2

    def test_bad_size_syntax(self, capsys):
        assert main(["synth", "--preset", "three-blobs", "--out", "x",
                     "--size", "64by64"]) == 2

    def test_render_needs_exactly_one_time_spec(self, run, ds, capsys):
        base = ["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                "--data", str(ds), "--camera", "cam1"]
        assert main(base) == 2
        assert main(base + ["--t", "0.5", "--t-range", "0:1:2"]) == 2

    def test_render_needs_exactly_one_camera_spec(self, run, ds, capsys):
        ckpt = str(run / "ckpt_final.g4ds")
        assert main(["render", "--ckpt", ckpt, "--t", "0.5"]) == 2
        assert main(["render", "--ckpt", ckpt, "--data", str(ds),
                     "--camera", "cam1", "--pose", "p.json",
                     "--t", "0.5"]) == 2


class TestModuleErrors:
    def test_missing_checkpoint(self, ds, capsys, tmp_path):
        code = main(["render", "--ckpt", str(tmp_path / "nope.g4ds"),
                     "--data", str(ds), "--camera", "cam1", "--t", "0.5",
                     "--out", str(tmp_path / "f.png")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_camera_id(self, run, ds, capsys, tmp_path):
        code = main(["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--camera", "cam9", "--t", "0.5",
                     "--out", str(tmp_path / "f.png")])
        assert code == 1
        err = capsys.readouterr().err
        assert "cam9" in err and "cam0" in err

    def test_missing_dataset(self, capsys, tmp_path):
        code = main(["train", "--data", str(tmp_path / "void"),
                     "--out", str(tmp_path / "o"), "--iters", "1"])
        assert code == 1

    def test_unknown_config_key(self, ds, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"iterations": 2, "warp_speed": 9}')
        code = main(["train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert "warp_speed" in capsys.readouterr().err

    def test_malformed_config(self, ds, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        code = main(["train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(tmp_path / "o")])
        assert code == 1

    def test_config_value_type_checked(self, ds, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"iterations": "many"}')
        code = main(["train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert "iterations" in capsys.readouterr().err

    def test_invalid_config_value(self, ds, capsys, tmp_path):
        code = main(["train", "--data", str(ds),
                     "--out", str(tmp_path / "o"), "--iters", "2",
                     "--loss-lambda", "1.5", "--init-count", "8"])
        assert code == 1


class TestSynth:
    def test_round_trips_through_load_dataset(self, ds):
        loaded = load_dataset(ds)
        assert len(loaded.frames) == 9
        assert sorted(loaded.cameras) == ["cam0", "cam1", "cam2"]
        assert (ds / "gt_scene.g4ds").exists()
        assert (ds / "synth_meta.json").exists()
        assert len(list((ds / "flow").glob("frame_*.npy"))) == 9

    def test_reports_layout(self, ds, capsys, tmp_path):
        code = main(["synth", "--preset", "orbit", "--out",
                     str(tmp_path / "orb"), "--cameras", "2",
                     "--timesteps", "2", "--size", "16x16"])
        assert code == 0
        out = capsys.readouterr().out
        assert "4 frames" in out and "16x16" in out


class TestTrain:
    def test_artifacts(self, run):
        assert (run / "ckpt_final.g4ds").exists()
        assert (run / "metrics.csv").exists()
        assert (run / "config.json").exists()
        scene = load_checkpoint(run / "ckpt_final.g4ds")
        assert scene.n_gaussians > 0

    def test_prints_final_holdout_psnr(self, ds, tmp_path, capsys):
        code = main(["train", "--data", str(ds),
                     "--out", str(tmp_path / "o"), "--iters", "2",
                     "--seed", "1", "--init-count", "8"])
        assert code == 0
        out = capsys.readouterr().out
        assert "final holdout PSNR:" in out and "dB" in out

    def test_config_json_captures_everything(self, run, ds):
        cfg = json.loads((run / "config.json").read_text())
        assert cfg["iterations"] == 3
        assert cfg["seed"] == 5
        assert cfg["init_count"] == 12
        assert cfg["data"].endswith("ds")
        assert cfg["deterministic"] is True
        # every optimizer knob is persisted
        for key in ("batch_size", "loss_lambda", "lr_position_spatial",
                    "lr_sh", "densify_interval", "opacity_reset_interval",
                    "radius_sigma", "threads", "backend",
                    "ablation_no_4drot", "sh_degree", "sh_time_order"):
            assert key in cfg, key

    def test_metrics_logged_per_iteration(self, run):
        lines = (run / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("iteration,wall_ms,loss,")
        data = [ln for ln in lines if ln and not ln.startswith("#")][1:]
        assert len(data) == 3
        assert data[-1].split(",")[0] == "3"

    def test_rerun_from_config_reproduces_metrics(self, run, tmp_path):
        out2 = tmp_path / "rerun"
        code = main(["train", "--config", str(run / "config.json"),
                     "--out", str(out2)])
        assert code == 0
        assert (out2 / "metrics.csv").read_bytes() == \
            (run / "metrics.csv").read_bytes()
        assert (out2 / "ckpt_final.g4ds").read_bytes() == \
            (run / "ckpt_final.g4ds").read_bytes()

    def test_flags_override_config_file(self, ds, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"iterations": 9, "seed": 2}')
        out = tmp_path / "o"
        code = main(["train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(out), "--iters", "2",
                     "--init-count", "8"])
        assert code == 0
        resolved = json.loads((out / "config.json").read_text())
        assert resolved["iterations"] == 2   # flag wins
        assert resolved["seed"] == 2         # file beats default
        data = [ln for ln in (out / "metrics.csv").read_text().splitlines()
                if ln and not ln.startswith(("#", "iteration"))]
        assert len(data) == 2

    def test_toml_config(self, ds, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('iterations = 2\nseed = 11\ninit_count = 8\n')
        out = tmp_path / "o"
        assert main(["train", "--data", str(ds), "--config", str(cfg),
                     "--out", str(out)]) == 0
        resolved = json.loads((out / "config.json").read_text())
        assert resolved["seed"] == 11 and resolved["init_count"] == 8

    def test_ablate_flag_recorded(self, ds, tmp_path):
        out = tmp_path / "o"
        code = main(["train", "--data", str(ds), "--out", str(out),
                     "--iters", "1", "--init-count", "8",
                     "--ablate", "no-4drot", "--ablate", "no-4dsh"])
        assert code == 0
        resolved = json.loads((out / "config.json").read_text())
        assert resolved["ablation_no_4drot"] is True
        assert resolved["ablation_no_4dsh"] is True
        # dropping temporal color harmonics happens at init
        assert resolved["sh_time_order"] == 0
        scene = load_checkpoint(out / "ckpt_final.g4ds")
        assert scene.sh_config.n_max == 0

    def test_env_var_threads_fallback(self, ds, tmp_path, monkeypatch):
        monkeypatch.setenv("SPLAT_THREADS", "5")
        out = tmp_path / "o"
        assert main(["train", "--data", str(ds), "--out", str(out),
                     "--iters", "1", "--init-count", "8"]) == 0
        assert json.loads((out / "config.json").read_text())["threads"] == 5

    def test_threads_flag_beats_env(self, ds, tmp_path, monkeypatch):
        monkeypatch.setenv("SPLAT_THREADS", "5")
        out = tmp_path / "o"
        assert main(["train", "--data", str(ds), "--out", str(out),
                     "--iters", "1", "--init-count", "8",
                     "--threads", "2"]) == 0
        assert json.loads((out / "config.json").read_text())["threads"] == 2

    def test_resume_appends(self, run, ds, tmp_path):
        out = tmp_path / "warm"
        shutil.copytree(run, out)
        code = main(["train", "--data", str(ds), "--out", str(out),
                     "--iters", "5", "--seed", "5",
                     "--resume", str(out / "ckpt_final.g4ds"),
                     "--start-iteration", "3"])
        assert code == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines.count(lines[0]) == 1, "header written once"
        data = [ln for ln in lines if ln and not ln.startswith(("#", "iter"))]
        assert data[-1].split(",")[0] == "5"
        assert len(data) == 3 + 2

    def test_resume_infers_start_from_filename(self, ds, tmp_path):
        out = tmp_path / "o"
        assert main(["train", "--data", str(ds), "--out", str(out),
                     "--iters", "2", "--init-count", "8",
                     "--checkpoint-interval", "1"]) == 0
        out2 = tmp_path / "o2"
        assert main(["train", "--data", str(ds), "--out", str(out2),
                     "--iters", "3",
                     "--resume", str(out / "ckpt_000001.g4ds")]) == 0
        data = [ln for ln in (out2 / "metrics.csv").read_text().splitlines()
                if ln and not ln.startswith(("#", "iter"))]
        assert [ln.split(",")[0] for ln in data] == ["2", "3"]


class TestRender:
    def test_single_frame(self, run, ds, tmp_path, capsys):
        out = tmp_path / "f.png"
        code = main(["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--camera", "cam1",
                     "--t", "0.5", "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_time_range_writes_sequence(self, run, ds, tmp_path):
        out = tmp_path / "frames"
        code = main(["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--camera", "cam1",
                     "--t-range", "0:1:4", "--out", str(out)])
        assert code == 0
        assert sorted(p.name for p in out.glob("*.png")) == [
            "f_000.png", "f_001.png", "f_002.png", "f_003.png"]

    def test_pose_json_camera(self, run, ds, tmp_path):
        from splat4d.scene_io import camera_to_json
        dataset = load_dataset(ds)
        pose = tmp_path / "pose.json"
        pose.write_text(json.dumps(camera_to_json(dataset.cameras["cam2"])))
        out = tmp_path / "f.png"
        code = main(["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--pose", str(pose), "--t", "0.0", "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_fps_bench_reports_stage_labels(self, run, ds, tmp_path,
                                            capsys):
        code = main(["render", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--camera", "cam1", "--t", "0.5",
                     "--out", str(tmp_path / "f.png"), "--fps-bench", "5"])
        assert code == 0
        out = capsys.readouterr().out
        assert "frames/sec" in out
        for stage in ("cull", "sort", "bin", "blend"):
            assert stage in out, stage


class TestEval:
    def test_prints_and_writes_metrics_json(self, run, ds, tmp_path,
                                            capsys):
        out = tmp_path / "metrics.json"
        code = main(["eval", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--out", str(out)])
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        written = json.loads(out.read_text())
        assert printed == written
        for key in ("psnr", "ssim", "dssim", "per_frame"):
            assert key in printed
        assert printed["split"] == "test"

    def test_gt_checkpoint_scores_high(self, ds, capsys):
        code = main(["eval", "--ckpt", str(ds / "gt_scene.g4ds"),
                     "--data", str(ds), "--split", "all"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["psnr"] > 45.0


class TestFlow:
    def test_writes_map_and_visualization(self, run, ds, tmp_path, capsys):
        base = tmp_path / "fl" / "flow"
        code = main(["flow", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--data", str(ds), "--camera", "cam1",
                     "--t", "0.5", "--dt", "0.5", "--out", str(base)])
        assert code == 0
        flow = np.load(base.with_suffix(".npy"))
        assert flow.shape == (24, 24, 2)
        assert base.with_suffix(".png").exists()

    def test_reports_against_ground_truth(self, ds, tmp_path, capsys):
        code = main(["flow", "--ckpt", str(ds / "gt_scene.g4ds"),
                     "--data", str(ds), "--camera", "cam1", "--t", "0.0",
                     "--out", str(tmp_path / "flow.npy"),
                     "--split", "all"])
        assert code == 0
        out = capsys.readouterr().out
        assert "angular accuracy: 1.0000" in out
        assert "end-point error:" in out

    def test_dt_defaults_to_ground_truth_step(self, ds, tmp_path, capsys):
        code = main(["flow", "--ckpt", str(ds / "gt_scene.g4ds"),
                     "--data", str(ds), "--camera", "cam1", "--t", "0.0",
                     "--out", str(tmp_path / "flow.npy")])
        assert code == 0
        assert "dt=0.5" in capsys.readouterr().out

    def test_dt_required_without_ground_truth(self, run, ds, tmp_path,
                                              capsys):
        from splat4d.scene_io import camera_to_json
        dataset = load_dataset(ds)
        pose = tmp_path / "pose.json"
        pose.write_text(json.dumps(camera_to_json(dataset.cameras["cam1"])))
        code = main(["flow", "--ckpt", str(run / "ckpt_final.g4ds"),
                     "--pose", str(pose), "--t", "0.5",
                     "--out", str(tmp_path / "flow.npy")])
        assert code == 2
        assert "--dt is required" in capsys.readouterr().err
