"""Command-line interface: ``splat4d train | render | eval | flow | synth``.

Exit codes: 0 on success, 1 on any package error (bad files, bad config
values, missing cameras — printed as ``error: ...``), 2 on malformed usage
(unknown flags, missing required flags, unparseable values).

``train`` resolves its parameters from three layers — built-in defaults,
then a ``--config`` file (JSON or TOML), then explicit flags — and writes
the fully resolved set to ``<out>/config.json``.  Re-running with
``--config <out>/config.json`` in deterministic mode reproduces
``metrics.csv`` byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import re
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from PIL import Image

from .errors import DatasetError, SchemaError, Splat4DError
from .evaluation import evaluate_flow, evaluate_on_split, flow_ground_truth_dt
from .raster import RenderOptions, render, render_flow
from .scene import ShConfig
from .scene_io import (
    flow_to_image,
    init_from_points,
    init_random_cube,
    load_camera_json,
    load_checkpoint,
    load_dataset,
    load_ply,
    save_flow,
    save_image,
)
from .synthetic import PRESETS, write_synthetic_dataset
from .training import TrainConfig, holdout_psnr, train

ABLATIONS = {
    "no-4drot": "ablation_no_4drot",
    "no-4dsh": "ablation_no_4dsh",
    "no-time-split": "ablation_no_time_split",
}

# Keys persisted in config.json beyond the TrainConfig fields: where the data
# lives and how the scene was initialized.  Together with the seed these pin
# everything a deterministic re-run needs.
CLI_ONLY_DEFAULTS = {
    "data": None,
    "init": "random-cube",
    "init_count": 2000,
    "init_half_extent": 1.2,
    "init_time_mode": "uniform",
    "init_ply": None,
    "sh_degree": 2,
    "sh_time_order": 1,
    "resume": None,
    "start_iteration": 0,
}

STAGE_LABELS = ("cull", "sort", "bin", "blend")

_CKPT_STEP_RE = re.compile(r"ckpt_(\d+)\.g4ds$")


def default_threads() -> int:
    """Worker count: SPLAT_THREADS env var, else hardware parallelism."""
    env = os.environ.get("SPLAT_THREADS")
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError:
            raise SchemaError(f"SPLAT_THREADS: expected an integer, got {env!r}")
        if value < 1:
            raise SchemaError(f"SPLAT_THREADS: expected a positive integer, got {value}")
        return value
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Argument parsing helpers


def _parse_size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text)
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise argparse.ArgumentTypeError(
            f"expected WIDTHxHEIGHT (e.g. 64x64), got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _parse_background(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected R,G,B (e.g. 0,0,0), got {text!r}")
    try:
        rgb = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected three numbers R,G,B, got {text!r}")
    return rgb


def _parse_t_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected START:END:COUNT (e.g. 0:1:60), got {text!r}")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected START:END:COUNT with numeric fields, got {text!r}")
    if count < 1:
        raise argparse.ArgumentTypeError(
            f"time range needs at least one frame, got count={count}")
    return start, end, count


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splat4d",
        description="Optimize and render dynamic scenes made of 4D Gaussians.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    # --- train ------------------------------------------------------------
    p = sub.add_parser(
        "train", help="optimize a scene against a dataset",
        description="Optimize a 4D Gaussian scene against posed, "
                    "timestamped images.")
    p.set_defaults(func=cmd_train, parser=p)
    p.add_argument("--data", help="dataset directory (manifest.json + images)")
    p.add_argument("--out", required=True,
                   help="output directory for checkpoints, metrics.csv, config.json")
    p.add_argument("--config", help="JSON or TOML file with parameter values "
                                    "(flags override it)")
    p.add_argument("--iters", type=int, dest="iterations", help="optimization steps")
    p.add_argument("--seed", type=int, help="RNG seed for init and batches")
    p.add_argument("--batch", type=int, dest="batch_size",
                   help="frames per optimization step")
    p.add_argument("--loss-lambda", type=float,
                   help="SSIM weight in the (1-λ)·L1 + λ·(1-SSIM) loss")
    for group in ("position-spatial", "position-temporal", "sh", "opacity",
                  "scales", "rotor"):
        p.add_argument(f"--lr-{group}", type=float,
                       help=f"learning rate for the {group.replace('-', ' ')} group")
    p.add_argument("--position-lr-decay", type=float,
                   help="total exponential decay factor for position LRs")
    p.add_argument("--densify-until-fraction", type=float,
                   help="fraction of the run with density control active")
    p.add_argument("--densify-interval", type=int,
                   help="steps between densify/prune passes")
    p.add_argument("--opacity-reset-interval", type=int,
                   help="steps between opacity resets (0 disables)")
    p.add_argument("--grad-threshold-spatial", type=float,
                   help="mean screen-gradient norm that triggers densification")
    p.add_argument("--grad-threshold-temporal", type=float,
                   help="mean time-center gradient that triggers densification")
    p.add_argument("--opacity-prune-threshold", type=float,
                   help="activated opacity below which Gaussians are pruned")
    p.add_argument("--percent-dense", type=float,
                   help="scale/extent ratio separating clone from split")
    p.add_argument("--max-radius-frac", type=float,
                   help="screen-radius fraction above which Gaussians are pruned")
    p.add_argument("--max-scale-frac", type=float,
                   help="world-scale/extent fraction above which Gaussians are pruned")
    p.add_argument("--holdout-interval", type=int,
                   help="steps between held-out PSNR evaluations")
    p.add_argument("--checkpoint-interval", type=int,
                   help="steps between periodic checkpoints (0: final only)")
    p.add_argument("--radius-sigma", type=float,
                   help="splat truncation radius in standard deviations")
    p.add_argument("--backend", choices=("compiled", "python"),
                   help="rasterizer kernel backend (default: auto-select)")
    p.add_argument("--threads", type=int,
                   help="worker threads (default: SPLAT_THREADS env var, "
                        "else hardware parallelism; deterministic mode pins 1)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   default=None,
                   help="bit-reproducible runs: single thread, wall_ms "
                        "logged as 0 (default: on)")
    p.add_argument("--ablate", action="append", choices=sorted(ABLATIONS),
                   help="disable a mechanism (repeatable)")
    p.add_argument("--init", choices=("random-cube", "ply"),
                   help="initialization source (default: random-cube)")
    p.add_argument("--init-count", type=int,
                   help="Gaussian count for random-cube init")
    p.add_argument("--init-half-extent", type=float,
                   help="half side length of the random-cube init volume")
    p.add_argument("--init-time-mode", choices=("uniform", "midpoint"),
                   help="time centers for point inits: spread uniformly or "
                        "all at duration/2")
    p.add_argument("--init-ply", help="PLY point cloud for --init ply")
    p.add_argument("--sh-degree", type=int, help="spherical-harmonic degree l_max")
    p.add_argument("--sh-time-order", type=int,
                   help="temporal harmonic order n_max")
    p.add_argument("--resume", help="checkpoint to warm-start from")
    p.add_argument("--start-iteration", type=int,
                   help="iteration offset when resuming (default: inferred "
                        "from a ckpt_NNNNNN.g4ds filename)")

    # --- render -----------------------------------------------------------
    p = sub.add_parser(
        "render", help="render frames from a checkpoint",
        description="Render one frame or a time sweep from a checkpoint; "
                    "--fps-bench times repeated renders per pipeline stage.")
    p.set_defaults(func=cmd_render, parser=p)
    p.add_argument("--ckpt", required=True, help="scene checkpoint (.g4ds)")
    p.add_argument("--data", help="dataset directory supplying cameras and "
                                  "background")
    p.add_argument("--camera", help="camera id from --data")
    p.add_argument("--pose", help="JSON file with one camera "
                                  "(id/fx/fy/cx/cy/width/height/"
                                  "world_to_camera/near)")
    p.add_argument("--t", type=float, help="normalized time in [0, 1]")
    p.add_argument("--t-range", type=_parse_t_range, metavar="START:END:COUNT",
                   help="evenly spaced times; writes f_000.png... into --out")
    p.add_argument("--out", help="output PNG path (single --t, default "
                                 "out.png) or directory (--t-range, default .)")
    p.add_argument("--background", type=_parse_background, metavar="R,G,B",
                   help="background color (default: dataset background, "
                        "else black)")
    p.add_argument("--fps-bench", type=int, metavar="N",
                   help="render N frames and report fps plus per-stage time")
    p.add_argument("--backend", choices=("compiled", "python"),
                   help="rasterizer kernel backend (default: auto-select)")
    p.add_argument("--threads", type=int,
                   help="worker threads (default: SPLAT_THREADS env var, "
                        "else hardware parallelism)")
    p.add_argument("--radius-sigma", type=float,
                   help="splat truncation radius in standard deviations")

    # --- eval ---------------------------------------------------------------
    p = sub.add_parser(
        "eval", help="image metrics over a dataset split",
        description="PSNR / SSIM / DSSIM of a checkpoint against a dataset "
                    "split, printed as JSON.")
    p.set_defaults(func=cmd_eval, parser=p)
    p.add_argument("--ckpt", required=True, help="scene checkpoint (.g4ds)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--out", help="also write the report to this JSON file")
    p.add_argument("--backend", choices=("compiled", "python"))
    p.add_argument("--threads", type=int)

    # --- flow ---------------------------------------------------------------
    p = sub.add_parser(
        "flow", help="render a screen-space flow map",
        description="Render the flow map at (camera, t, dt) to .npy plus a "
                    "color-wheel PNG; with --data and flow/ ground truth, "
                    "also report end-point error and angular accuracy.")
    p.set_defaults(func=cmd_flow, parser=p)
    p.add_argument("--ckpt", required=True, help="scene checkpoint (.g4ds)")
    p.add_argument("--data", help="dataset directory (cameras, background, "
                                  "optional flow ground truth)")
    p.add_argument("--camera", help="camera id from --data")
    p.add_argument("--pose", help="JSON file with one camera")
    p.add_argument("--t", type=float, required=True,
                   help="normalized time in [0, 1]")
    p.add_argument("--dt", type=float,
                   help="time offset (default: the dataset's ground-truth "
                        "step when --data has one)")
    p.add_argument("--out", default="flow.npy",
                   help="output basename; writes <base>.npy and <base>.png")
    p.add_argument("--split", choices=("test", "train", "all"), default="test",
                   help="split for the ground-truth comparison")
    p.add_argument("--background", type=_parse_background, metavar="R,G,B")
    p.add_argument("--backend", choices=("compiled", "python"))
    p.add_argument("--threads", type=int)

    # --- synth --------------------------------------------------------------
    p = sub.add_parser(
        "synth", help="generate a synthetic dataset",
        description="Write a synthetic dataset (images, manifest, analytic "
                    "flow maps, ground-truth scene) from a preset.")
    p.set_defaults(func=cmd_synth, parser=p)
    p.add_argument("--preset", required=True, choices=sorted(PRESETS),
                   help="scene preset")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", type=int, help="override ring camera count")
    p.add_argument("--timesteps", type=int, help="override timestep count")
    p.add_argument("--size", type=_parse_size, metavar="WxH",
                   help="override image size")

    return parser


# ---------------------------------------------------------------------------
# train


def _load_config_file(path: Path) -> dict:
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib as toml_parser
            except ModuleNotFoundError:
                import tomli as toml_parser
            with open(path, "rb") as fh:
                data = toml_parser.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:  # JSONDecodeError / TOMLDecodeError
        raise SchemaError(f"{path}: not valid "
                          f"{'TOML' if path.suffix.lower() == '.toml' else 'JSON'}"
                          f": {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected an object/table at the top level")
    return data


def _check_config_value(source: str, key: str, value, default):
    """Type-check one config entry against the default that defines it."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(f"{source}: {key}: expected a boolean, "
                              f"got {type(value).__name__}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{source}: {key}: expected an integer, "
                              f"got {type(value).__name__}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{source}: {key}: expected a number, "
                              f"got {type(value).__name__}")
        return float(value)
    # remaining defaults are strings or None (str-or-null fields)
    if value is not None and not isinstance(value, str):
        raise SchemaError(f"{source}: {key}: expected a string or null, "
                          f"got {type(value).__name__}")
    return value


def resolve_train_config(args) -> dict:
    """Merge defaults <- config file <- explicit flags into one flat dict."""
    defaults = {f.name: getattr(TrainConfig(), f.name)
                for f in dataclasses.fields(TrainConfig)}
    defaults.update(CLI_ONLY_DEFAULTS)
    resolved = dict(defaults)
    threads_given = False

    if args.config:
        path = Path(args.config)
        file_values = _load_config_file(path)
        for key, value in file_values.items():
            if key not in defaults:
                raise SchemaError(f"{path}: unknown config key '{key}'")
            resolved[key] = _check_config_value(str(path), key, value,
                                                defaults[key])
        threads_given = "threads" in file_values

    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
            if key == "threads":
                threads_given = True
    if args.ablate:
        for name in args.ablate:
            resolved[ABLATIONS[name]] = True
    if not threads_given:
        resolved["threads"] = default_threads()

    # Dropping the temporal color harmonics happens at init time: the scene
    # is built without them, so the optimizer never sees those coefficients.
    if resolved["ablation_no_4dsh"]:
        resolved["sh_time_order"] = 0
    if resolved["data"] is None:
        args.parser.error("--data is required (flag or config file)")
    if resolved["init"] == "ply" and resolved["init_ply"] is None:
        args.parser.error("--init ply requires --init-ply")
    resolved["data"] = os.path.abspath(resolved["data"])
    if resolved["init_ply"] is not None:
        resolved["init_ply"] = os.path.abspath(resolved["init_ply"])
    if resolved["resume"] is not None:
        resolved["resume"] = os.path.abspath(resolved["resume"])
    if not (0 <= resolved["sh_degree"] <= 3):
        raise SchemaError(f"sh_degree: expected 0..3, got {resolved['sh_degree']}")
    if not (0 <= resolved["sh_time_order"] <= 4):
        raise SchemaError(f"sh_time_order: expected 0..4, "
                          f"got {resolved['sh_time_order']}")
    return resolved


def _initial_scene(resolved: dict, duration: float):
    """The starting scene and iteration offset for a training run."""
    if resolved["resume"]:
        scene = load_checkpoint(resolved["resume"])
        start = resolved["start_iteration"]
        if start == 0:
            m = _CKPT_STEP_RE.search(os.path.basename(resolved["resume"]))
            if m:
                start = int(m.group(1))
        return scene, start

    sh_cfg = ShConfig(l_max=resolved["sh_degree"],
                      n_max=resolved["sh_time_order"], period=duration)
    rng = np.random.default_rng(resolved["seed"])
    if resolved["init"] == "ply":
        points, colors = load_ply(resolved["init_ply"])
        scene = init_from_points(points, colors, duration, sh_config=sh_cfg,
                                 rng=rng, time_mode=resolved["init_time_mode"])
    else:
        scene = init_random_cube(resolved["init_count"],
                                 resolved["init_half_extent"], duration,
                                 rng=rng, sh_config=sh_cfg)
    return scene, resolved["start_iteration"]


def cmd_train(args) -> int:
    resolved = resolve_train_config(args)
    cfg = TrainConfig(**{f.name: resolved[f.name]
                         for f in dataclasses.fields(TrainConfig)})
    cfg.validate()

    dataset = load_dataset(resolved["data"])
    scene, start = _initial_scene(resolved, dataset.duration)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")

    scene, _ = train(scene, dataset, cfg, out_dir=out_dir,
                     start_iteration=start)

    final = holdout_psnr(scene, dataset, cfg.render_options())
    if final is None:
        print("final holdout PSNR: n/a (no held-out frames)")
    else:
        print(f"final holdout PSNR: {final:.2f} dB")
    print(f"checkpoint: {out_dir / 'ckpt_final.g4ds'}")
    return 0


# ---------------------------------------------------------------------------
# render / flow shared camera plumbing


def _render_options(args) -> RenderOptions:
    threads = args.threads if args.threads is not None else default_threads()
    kwargs = {"backend": args.backend, "threads": threads}
    if getattr(args, "radius_sigma", None) is not None:
        kwargs["radius_sigma"] = args.radius_sigma
    return RenderOptions(**kwargs)


def _resolve_camera(args, dataset):
    if (args.camera is None) == (args.pose is None):
        args.parser.error("exactly one of --camera or --pose is required")
    if args.pose:
        return load_camera_json(args.pose)
    if dataset is None:
        args.parser.error("--camera needs --data to look the id up in")
    if args.camera not in dataset.cameras:
        known = ", ".join(sorted(dataset.cameras)) or "none"
        raise DatasetError(f"camera '{args.camera}' not in dataset "
                           f"(available: {known})")
    return dataset.cameras[args.camera]


def _background(args, dataset):
    if args.background is not None:
        return tuple(args.background)
    if dataset is not None:
        return tuple(float(v) for v in dataset.background)
    return (0.0, 0.0, 0.0)


def cmd_render(args) -> int:
    if (args.t is None) == (args.t_range is None):
        args.parser.error("exactly one of --t or --t-range is required")
    scene = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data) if args.data else None
    cam = _resolve_camera(args, dataset)
    background = _background(args, dataset)
    opts = _render_options(args)

    if args.t is not None:
        times = [args.t]
        out_path = Path(args.out) if args.out else Path("out.png")
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out = render(scene, cam, args.t, background=background, opts=opts)
        save_image(out_path, out.color)
        print(f"wrote {out_path}")
    else:
        start, end, count = args.t_range
        times = list(np.linspace(start, end, count))
        out_dir = Path(args.out) if args.out else Path(".")
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(times):
            out = render(scene, cam, float(t), background=background,
                         opts=opts)
            save_image(out_dir / f"f_{i:03d}.png", out.color)
        print(f"wrote {count} frames to {out_dir}{os.sep}f_000.png...")

    if args.fps_bench:
        n = args.fps_bench
        if n < 1:
            args.parser.error("--fps-bench needs a positive frame count")
        totals = dict.fromkeys(STAGE_LABELS, 0.0)
        t0 = perf_counter()
        for i in range(n):
            out = render(scene, cam, float(times[i % len(times)]),
                         background=background, opts=opts, with_timings=True)
            for stage, seconds in out.timings.items():
                totals[stage] = totals.get(stage, 0.0) + seconds
        elapsed = perf_counter() - t0
        print(f"rendered {n} frames in {elapsed:.3f} s "
              f"({n / elapsed:.1f} frames/sec)")
        print("per-stage time:")
        for stage in STAGE_LABELS:
            print(f"  {stage:<5s} {totals[stage] * 1e3:10.2f} ms")
    return 0


def cmd_eval(args) -> int:
    scene = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    opts = _render_options(args)
    report = evaluate_on_split(scene, dataset, opts=opts, split=args.split)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_flow(args) -> int:
    scene = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data) if args.data else None
    cam = _resolve_camera(args, dataset)
    background = _background(args, dataset)
    opts = _render_options(args)

    dt = args.dt
    gt_dir = Path(dataset.root) / "flow" if dataset is not None else None
    have_gt = gt_dir is not None and gt_dir.is_dir()
    if dt is None:
        if not have_gt:
            args.parser.error("--dt is required without ground-truth flow "
                              "metadata in --data")
        dt = flow_ground_truth_dt(dataset.root)

    out = render_flow(scene, cam, args.t, dt, background=background,
                      opts=opts)
    base = Path(args.out)
    if base.suffix:
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    save_flow(base.with_suffix(".npy"), out.flow)
    # flow_to_image yields display-ready sRGB bytes; save_image would
    # re-encode them, so write directly.
    Image.fromarray(flow_to_image(out.flow), "RGB").save(base.with_suffix(".png"))
    mags = np.linalg.norm(out.flow, axis=2)
    print(f"wrote {base.with_suffix('.npy')} and {base.with_suffix('.png')} "
          f"(max |flow| {mags.max():.3f} px)")

    if have_gt:
        report = evaluate_flow(scene, dataset, opts=opts, split=args.split)
        print(f"ground-truth comparison (split={report['split']}, "
              f"{report['num_frames']} frames, dt={report['dt']:.6g}):")
        print(f"  end-point error:  {report['epe']:.4f} px")
        print(f"  angular accuracy: {report['angular_accuracy']:.4f}")
        print(f"  masked pixels:    {report['masked_pixels']}")
    return 0


def cmd_synth(args) -> int:
    spec = PRESETS[args.preset]()
    overrides = {}
    if args.cameras is not None:
        overrides["n_cameras"] = args.cameras
    if args.timesteps is not None:
        overrides["n_timesteps"] = args.timesteps
    if args.size is not None:
        overrides["width"], overrides["height"] = args.size
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    spec.validate()
    out_dir = Path(args.out)
    _, dataset = write_synthetic_dataset(spec, out_dir,
                                         rng=np.random.default_rng(args.seed))
    print(f"wrote {len(dataset.frames)} frames "
          f"({spec.n_cameras} cameras x {spec.n_timesteps} timesteps, "
          f"{spec.width}x{spec.height}) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except SystemExit as exc:  # parser.error() inside a command
        return int(exc.code) if exc.code is not None else 0
    except Splat4DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
