"""Training loop: rendering loss, grouped Adam, density control, logging.

The loss is (1 - lambda) * L1 + lambda * (1 - SSIM) between the rendered
and target images, both in linear RGB.  Each iteration renders a batch of
uniformly sampled training frames, averages the analytic gradients, and
takes one Adam step per parameter group.  Densification runs on a fixed
interval during the first half of training (configurable fraction), with
periodic opacity resets.  Parameters are snapped to float32 after every
step so checkpoints are bit-exact snapshots of the training state.

Determinism: with deterministic=True the loop forces single-threaded
rendering, accumulates batch gradients sequentially in sample order, and
logs wall_ms as 0, so metrics.csv is bit-identical across runs with the
same seed and config.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from time import perf_counter

import numpy as np

from .density import GradStats, densify_and_prune, reset_opacity
from .errors import ShapeMismatchError, Splat4DError
from .metrics import psnr, ssim_with_grad
from .raster import RenderOptions, render, render_backward, render_with_context
from .scene import Scene
from .scene_io import Dataset, save_checkpoint

PARAM_NAMES = ("means", "log_scales", "rotors_left", "rotors_right",
               "opacity_logits", "sh")

METRICS_HEADER = ("iteration", "wall_ms", "loss", "l1", "ssim_11x11",
                  "num_gaussians", "psnr_holdout")


@dataclass
class TrainConfig:
    iterations: int = 30000
    batch_size: int = 8
    loss_lambda: float = 0.2
    # Learning rates.  Spatial position lr is additionally scaled by the
    # camera-rig extent and decays exponentially by position_lr_decay over
    # the run; temporal position lr is scaled by the scene duration with the
    # same decay.
    lr_position_spatial: float = 1.6e-4
    lr_position_temporal: float = 1.6e-4
    position_lr_decay: float = 0.01
    lr_sh: float = 2.5e-3
    lr_opacity: float = 0.05
    lr_scales: float = 5e-3
    lr_rotor: float = 1e-3
    # Density control.
    densify_until_fraction: float = 0.5
    densify_interval: int = 100
    opacity_reset_interval: int = 3000
    grad_threshold_spatial: float = 2e-4
    grad_threshold_temporal: float = 2e-4  # scaled by duration
    opacity_prune_threshold: float = 0.005
    percent_dense: float = 0.01
    max_radius_frac: float = 0.8
    max_scale_frac: float = 0.25
    # Ablations.
    ablation_no_4drot: bool = False
    ablation_no_4dsh: bool = False
    ablation_no_time_split: bool = False
    # Execution.
    seed: int = 0
    deterministic: bool = True
    threads: int = 1
    backend: str | None = None
    radius_sigma: float = 5.0
    holdout_interval: int = 500
    checkpoint_interval: int = 0  # 0: only the final checkpoint

    def validate(self) -> None:
        if not 0 < self.densify_until_fraction <= 1:
            raise ShapeMismatchError(
                f"densify_until_fraction must be in (0, 1], "
                f"got {self.densify_until_fraction}")
        for name in ("lr_position_spatial", "lr_position_temporal", "lr_sh",
                     "lr_opacity", "lr_scales", "lr_rotor"):
            if not getattr(self, name) > 0:
                raise ShapeMismatchError(f"{name} must be positive")
        if self.iterations < 0 or self.batch_size < 1:
            raise ShapeMismatchError("iterations must be >= 0, batch_size >= 1")
        if not 0 <= self.loss_lambda <= 1:
            raise ShapeMismatchError(
                f"loss_lambda must be in [0, 1], got {self.loss_lambda}")

    def render_options(self) -> RenderOptions:
        threads = 1 if self.deterministic else self.threads
        return RenderOptions(no_4drot=self.ablation_no_4drot,
                             backend=self.backend, threads=threads,
                             radius_sigma=self.radius_sigma)


class Adam:
    """Adam with bias correction and one moment pair per parameter array.

    Learning rates are passed per step (they carry the schedules) and may be
    scalars or per-component vectors broadcast against the parameter.
    """

    def __init__(self, scene: Scene, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-15):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.steps = 0
        self.m = {n: np.zeros_like(getattr(scene, n)) for n in PARAM_NAMES}
        self.v = {n: np.zeros_like(getattr(scene, n)) for n in PARAM_NAMES}

    def step(self, scene: Scene, grads: dict, lrs: dict) -> None:
        self.steps += 1
        bc1 = 1.0 - self.beta1 ** self.steps
        bc2 = 1.0 - self.beta2 ** self.steps
        for name in PARAM_NAMES:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            getattr(scene, name)[...] -= lrs[name] * update

    def remap(self, source_rows: np.ndarray) -> None:
        """Re-index moments after density control.

        source_rows[i] is the old row feeding new row i, or -1 for rows
        created by the pass (their moments start at zero).
        """
        source_rows = np.asarray(source_rows, dtype=np.int64)
        kept = source_rows >= 0
        old = source_rows[kept]
        for table in (self.m, self.v):
            for name in PARAM_NAMES:
                shape = (len(source_rows),) + table[name].shape[1:]
                fresh = np.zeros(shape, dtype=table[name].dtype)
                fresh[kept] = table[name][old]
                table[name] = fresh

    def zero_group(self, name: str) -> None:
        self.m[name][...] = 0.0
        self.v[name][...] = 0.0


def loss(rendered, target, lam: float) -> float:
    """(1 - lam) * mean absolute error + lam * (1 - SSIM)."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ShapeMismatchError(
            f"loss: shapes {rendered.shape} vs {target.shape}")
    l1 = float(np.mean(np.abs(rendered - target)))
    ssim_val, _ = ssim_with_grad(rendered, target)
    return (1.0 - lam) * l1 + lam * (1.0 - ssim_val)


def loss_and_grads(scene: Scene, cam, t: float, target, lam: float,
                   background, opts: RenderOptions):
    """One frame's loss value and scene-parameter gradients.

    Returns (loss, l1, ssim, grads, stats, info); grads are full (N, ...)
    arrays, stats feed GradStats.accumulate.
    """
    out, ctx = render_with_context(scene, cam, t, background, opts)
    target = np.asarray(target, dtype=np.float64)
    if out.color.shape != target.shape:
        raise ShapeMismatchError(
            f"target shape {target.shape} vs render {out.color.shape}")
    diff = out.color - target
    l1 = float(np.mean(np.abs(diff)))
    ssim_val, ssim_grad = ssim_with_grad(out.color, target)
    total = (1.0 - lam) * l1 + lam * (1.0 - ssim_val)
    d_color = (1.0 - lam) * np.sign(diff) / diff.size - lam * ssim_grad
    grads, stats, info = render_backward(scene, cam, ctx, d_color)
    return total, l1, ssim_val, grads, stats, info


def sample_batch(dataset: Dataset, batch_size: int,
                 rng: np.random.Generator):
    """batch_size training frames drawn uniformly with replacement."""
    train = dataset.train_frames
    if not train:
        raise Splat4DError("dataset has no training frames")
    idx = rng.integers(0, len(train), size=batch_size)
    return [train[i] for i in idx]


def learning_rates(cfg: TrainConfig, iteration: int, extent: float,
                   duration: float) -> dict:
    """Per-group learning rates at a given iteration (exponential decay on
    positions, constant elsewhere)."""
    frac = iteration / max(cfg.iterations, 1)
    decay = cfg.position_lr_decay ** frac
    spatial = cfg.lr_position_spatial * extent * decay
    temporal = cfg.lr_position_temporal * duration * decay
    return {
        "means": np.array([spatial, spatial, spatial, temporal]),
        "log_scales": cfg.lr_scales,
        "rotors_left": cfg.lr_rotor,
        "rotors_right": cfg.lr_rotor,
        "opacity_logits": cfg.lr_opacity,
        "sh": cfg.lr_sh,
    }


def holdout_psnr(scene: Scene, dataset: Dataset,
                 opts: RenderOptions) -> float | None:
    """Mean PSNR over the held-out frames (None when there are none)."""
    frames = dataset.test_frames
    if not frames:
        return None
    values = []
    for frame in frames:
        out = render(scene, dataset.cameras[frame.camera], frame.time,
                     background=dataset.background, opts=opts)
        values.append(psnr(out.color, frame.image))
    return float(np.mean(values))


class _MetricsLog:
    """metrics.csv writer; also keeps rows in memory for callers."""

    def __init__(self, path: Path | None, append: bool):
        self.rows: list[dict] = []
        self.reports: list[dict] = []
        self._fh = None
        if path is not None:
            exists = path.exists() and append
            self._fh = open(path, "a" if append else "w", newline="")
            if not exists:
                self._fh.write(",".join(METRICS_HEADER) + "\n")

    def row(self, iteration, wall_ms, loss_val, l1, ssim_val, count, hold):
        rec = {"iteration": iteration, "wall_ms": wall_ms, "loss": loss_val,
               "l1": l1, "ssim_11x11": ssim_val, "num_gaussians": count,
               "psnr_holdout": hold}
        self.rows.append(rec)
        if self._fh is not None:
            hold_s = "" if hold is None else repr(hold)
            self._fh.write(f"{iteration},{wall_ms},{loss_val!r},{l1!r},"
                           f"{ssim_val!r},{count},{hold_s}\n")
            self._fh.flush()

    def densify(self, iteration, report):
        rec = {"iteration": iteration, **report}
        self.reports.append(rec)
        if self._fh is not None:
            self._fh.write(
                f"#densify iteration={iteration} cloned={report['cloned']} "
                f"split={report['split']} pruned={report['pruned']} "
                f"total={report['total']}\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def train(scene: Scene, dataset: Dataset, cfg: TrainConfig,
          out_dir=None, start_iteration: int = 0):
    """Optimize the scene against the dataset.  Returns (scene, log).

    When out_dir is given, writes metrics.csv, optional periodic
    checkpoints, and ckpt_final.g4ds there.  start_iteration > 0 resumes a
    warm-started scene partway through the schedule (optimizer moments
    restart; the G4DS format stores parameters only) and appends to an
    existing metrics.csv.
    """
    cfg.validate()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    scene = scene.copy()
    rng = np.random.default_rng(cfg.seed)
    opts = cfg.render_options()
    adam = Adam(scene)
    stats = GradStats.zeros(scene.n_gaussians)
    extent = dataset.camera_extent
    duration = dataset.duration
    lam = cfg.loss_lambda
    densify_until = int(cfg.iterations * cfg.densify_until_fraction)
    log = _MetricsLog(out_path / "metrics.csv" if out_path else None,
                      append=start_iteration > 0)
    clone_step = learning_rates(cfg, 0, extent, duration)["means"]

    try:
        for it in range(start_iteration, cfg.iterations):
            t0 = perf_counter()
            step = it + 1
            lrs = learning_rates(cfg, it, extent, duration)
            frames = sample_batch(dataset, cfg.batch_size, rng)
            totals = {n: np.zeros_like(getattr(scene, n))
                      for n in PARAM_NAMES}
            loss_sum = l1_sum = ssim_sum = 0.0
            for frame in frames:
                cam = dataset.cameras[frame.camera]
                val, l1, sv, grads, fstats, _ = loss_and_grads(
                    scene, cam, frame.time, frame.image, lam,
                    dataset.background, opts)
                for name in PARAM_NAMES:
                    totals[name] += grads[name]
                stats.accumulate(fstats)
                loss_sum += val
                l1_sum += l1
                ssim_sum += sv
            inv = 1.0 / cfg.batch_size
            for name in PARAM_NAMES:
                totals[name] *= inv
            adam.step(scene, totals, lrs)
            scene.quantize_f32()

            if step <= densify_until and step % cfg.densify_interval == 0:
                scene, report, src = densify_and_prune(
                    scene, stats,
                    extent=extent,
                    grad_threshold_spatial=cfg.grad_threshold_spatial,
                    grad_threshold_temporal=(cfg.grad_threshold_temporal
                                             * duration),
                    opacity_prune_threshold=cfg.opacity_prune_threshold,
                    clone_step=clone_step,
                    rng=rng,
                    percent_dense=cfg.percent_dense,
                    max_radius_frac=cfg.max_radius_frac,
                    max_scale_frac=cfg.max_scale_frac,
                    no_time_split=cfg.ablation_no_time_split)
                adam.remap(src)
                stats = GradStats.zeros(scene.n_gaussians)
                log.densify(step, report)

            if step <= densify_until and \
                    step % cfg.opacity_reset_interval == 0:
                reset_opacity(scene)
                scene.quantize_f32()
                adam.zero_group("opacity_logits")

            hold = None
            if (cfg.holdout_interval and step % cfg.holdout_interval == 0) \
                    or step == cfg.iterations:
                hold = holdout_psnr(scene, dataset, opts)
            wall_ms = 0.0 if cfg.deterministic else \
                (perf_counter() - t0) * 1000.0
            log.row(step, wall_ms, loss_sum * inv, l1_sum * inv,
                    ssim_sum * inv, scene.n_gaussians, hold)

            if out_path is not None and cfg.checkpoint_interval and \
                    step % cfg.checkpoint_interval == 0:
                save_checkpoint(scene, out_path / f"ckpt_{step:06d}.g4ds")

        if out_path is not None:
            save_checkpoint(scene, out_path / "ckpt_final.g4ds")
    finally:
        log.close()
    return scene, log
