"""Evaluation harnesses: image metrics over a split, flow accuracy.

evaluate_on_split renders each requested frame and reports PSNR / SSIM /
DSSIM, both averaged and per-frame, as a JSON-serializable dict.

evaluate_flow renders per-pixel screen motion for frames that have
ground-truth flow sidecars (flow/frame_XXX.npy in dataset frame order,
with the timestep recorded in synth_meta.json) and scores endpoint error
and angular accuracy inside the coverage mask (accumulated alpha > 0.5).
Angular accuracy is only meaningful where something actually moves, so
pixels whose ground-truth flow is shorter than min_gt_magnitude are
excluded from the mask.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .metrics import dssim, eval_flow, psnr, ssim
from .raster import DEFAULT_OPTIONS, RenderOptions, render, render_flow
from .scene import Scene
from .scene_io import Dataset, load_flow

DEFAULT_MIN_GT_MAGNITUDE = 0.05  # pixels per timestep


def evaluate_on_split(scene: Scene, dataset: Dataset,
                      opts: RenderOptions = DEFAULT_OPTIONS,
                      split: str = "test") -> dict:
    """PSNR / SSIM / DSSIM of renders against a dataset split.

    split is "test", "train", or "all".  Falls back to every frame when the
    requested split is empty so evaluation never silently scores nothing.
    """
    if split == "test":
        indices = dataset.test_idx
    elif split == "train":
        indices = dataset.train_idx
    elif split == "all":
        indices = list(range(len(dataset.frames)))
    else:
        raise DatasetError(f"unknown split {split!r}")
    if not indices:
        indices = list(range(len(dataset.frames)))

    per_psnr, per_ssim, per_dssim, frame_ids = [], [], [], []
    for idx in indices:
        frame = dataset.frames[idx]
        cam = dataset.cameras[frame.camera]
        out = render(scene, cam, frame.time, background=dataset.background,
                     opts=opts)
        per_psnr.append(psnr(out.color, frame.image))
        per_ssim.append(ssim(out.color, frame.image))
        per_dssim.append(dssim(out.color, frame.image))
        frame_ids.append({"index": idx, "camera": frame.camera,
                          "time": frame.time})
    return {
        "psnr": float(np.mean(per_psnr)),
        "ssim": float(np.mean(per_ssim)),
        "dssim": float(np.mean(per_dssim)),
        "split": split,
        "num_frames": len(indices),
        "per_frame": {
            "psnr": [float(v) for v in per_psnr],
            "ssim": [float(v) for v in per_ssim],
            "dssim": [float(v) for v in per_dssim],
            "frames": frame_ids,
        },
    }


def flow_ground_truth_dt(dataset_root) -> float:
    """The normalized flow timestep recorded by the dataset generator."""
    meta_path = Path(dataset_root) / "synth_meta.json"
    if not meta_path.is_file():
        raise DatasetError(
            f"{dataset_root}: no synth_meta.json (flow ground truth is only "
            f"available for generated datasets)")
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{meta_path}: {exc}") from exc
    dt = meta.get("flow_dt_normalized")
    if not isinstance(dt, (int, float)) or not dt > 0:
        raise DatasetError(f"{meta_path}: missing flow_dt_normalized")
    return float(dt)


def evaluate_flow(scene: Scene, dataset: Dataset, flow_dir=None,
                  dt: float | None = None,
                  opts: RenderOptions = DEFAULT_OPTIONS,
                  split: str = "test",
                  min_gt_magnitude: float = DEFAULT_MIN_GT_MAGNITUDE
                  ) -> dict:
    """Endpoint error and angular accuracy against flow sidecars.

    flow_dir defaults to <dataset.root>/flow; dt defaults to the value in
    the dataset's synth_meta.json.  The mask requires accumulated alpha
    > 0.5 in the render and a ground-truth displacement of at least
    min_gt_magnitude pixels.
    """
    root = Path(dataset.root)
    flow_dir = Path(flow_dir) if flow_dir is not None else root / "flow"
    if dt is None:
        dt = flow_ground_truth_dt(root)
    if split == "test":
        indices = dataset.test_idx
    elif split == "train":
        indices = dataset.train_idx
    elif split == "all":
        indices = list(range(len(dataset.frames)))
    else:
        raise DatasetError(f"unknown split {split!r}")
    if not indices:
        indices = list(range(len(dataset.frames)))

    per_epe, per_acc, frame_ids = [], [], []
    masked_total = 0
    for idx in indices:
        gt_path = flow_dir / f"frame_{idx:03d}.npy"
        if not gt_path.is_file():
            raise DatasetError(f"no ground-truth flow for frame {idx} "
                               f"({gt_path})")
        gt = load_flow(gt_path)
        frame = dataset.frames[idx]
        cam = dataset.cameras[frame.camera]
        out = render_flow(scene, cam, frame.time, dt,
                          background=dataset.background, opts=opts)
        mask = (out.alpha > 0.5) & \
               (np.linalg.norm(gt, axis=-1) >= min_gt_magnitude)
        epe, acc = eval_flow(out.flow, gt, mask)
        per_epe.append(epe)
        per_acc.append(acc)
        masked_total += int(mask.sum())
        frame_ids.append({"index": idx, "camera": frame.camera,
                          "time": frame.time, "masked_pixels":
                          int(mask.sum())})
    return {
        "epe": float(np.mean(per_epe)),
        "angular_accuracy": float(np.mean(per_acc)),
        "dt": float(dt),
        "split": split,
        "num_frames": len(indices),
        "masked_pixels": masked_total,
        "per_frame": {
            "epe": [float(v) for v in per_epe],
            "angular_accuracy": [float(v) for v in per_acc],
            "frames": frame_ids,
        },
    }
