"""Adaptive density control: clone, split by 4D sampling, prune.

Decisions use per-Gaussian gradient statistics accumulated between passes:
a Gaussian whose mean screen-space positional gradient or mean |d loss /
d mu_t| exceeds its threshold is under-reconstructed and gets densified.
Small ones are cloned (duplicated, nudged one optimizer step against the
gradient); large ones are split into two children whose means are drawn
jointly from the full 4D covariance, so a time-coupled Gaussian splits
along its motion track.  Afterwards, transparent, screen-filling, and
oversized Gaussians are pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussians import build_covariance
from .scene import (
    Scene,
    activated_opacity,
    activated_scales,
    concat_scenes,
    logit,
)

SCALE_SHRINK = 1.6          # children are 1/1.6 the parent's size per axis
PERCENT_DENSE = 0.01        # clone below this fraction of the scene extent
OPACITY_RESET_VALUE = 0.01


@dataclass
class GradStats:
    """Per-Gaussian accumulators between densification passes.

    sum_gnorm2d: summed norms of d loss / d mean2d (pixels)
    sum_gmu_t:   summed |d loss / d mu_t|
    sum_grad_mean4: summed 4D mean gradient (drives clone displacement)
    count:       number of renders the Gaussian was visible in
    max_radius_frac: largest projected radius / image width seen
    """

    sum_gnorm2d: np.ndarray
    sum_gmu_t: np.ndarray
    sum_grad_mean4: np.ndarray
    count: np.ndarray
    max_radius_frac: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "GradStats":
        return cls(
            sum_gnorm2d=np.zeros(n),
            sum_gmu_t=np.zeros(n),
            sum_grad_mean4=np.zeros((n, 4)),
            count=np.zeros(n, dtype=np.int64),
            max_radius_frac=np.zeros(n),
        )

    @property
    def n(self) -> int:
        return self.count.shape[0]

    def accumulate(self, frame_stats: dict) -> None:
        """Fold in one render's backward statistics (keyed by vis_idx)."""
        vis = frame_stats["vis_idx"]
        if len(vis) == 0:
            return
        np.add.at(self.sum_gnorm2d, vis, frame_stats["gnorm2d"])
        np.add.at(self.sum_gmu_t, vis, frame_stats["gmu_t"])
        np.add.at(self.sum_grad_mean4, vis, frame_stats["grad_mean4"])
        np.add.at(self.count, vis, 1)
        np.maximum.at(self.max_radius_frac, vis, frame_stats["radius_frac"])

    def mean_gnorm2d(self) -> np.ndarray:
        return self.sum_gnorm2d / np.maximum(self.count, 1)

    def mean_gmu_t(self) -> np.ndarray:
        return self.sum_gmu_t / np.maximum(self.count, 1)

    def mean_grad_mean4(self) -> np.ndarray:
        return self.sum_grad_mean4 / np.maximum(self.count, 1)[:, None]


def _covariance_factor_rows(scene: Scene, idx: np.ndarray) -> np.ndarray:
    """Per-row factor L with L L^T = the full 4D covariance.

    Cholesky when positive definite; eigen fallback with negative
    eigenvalues zeroed when activation floors made a row degenerate.
    """
    scales = activated_scales(scene)
    out = np.empty((len(idx), 4, 4))
    for j, i in enumerate(idx):
        cov = build_covariance(scales[i], scene.rotors_left[i],
                               scene.rotors_right[i])
        try:
            out[j] = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(cov)
            out[j] = v * np.sqrt(np.maximum(w, 0.0))
    return out


def sample_split_means(scene: Scene, idx: np.ndarray,
                       rng: np.random.Generator, children: int = 2,
                       no_time_split: bool = False) -> np.ndarray:
    """(len(idx) * children, 4) joint spacetime samples, grouped by parent."""
    factors = _covariance_factor_rows(scene, idx)
    z = rng.standard_normal((len(idx), children, 4))
    samples = scene.means[idx, None, :] + np.einsum("pij,pcj->pci", factors, z)
    if no_time_split:
        samples[:, :, 3] = scene.means[idx, None, 3]
    return samples.reshape(-1, 4)


def split_gaussians(scene: Scene, idx, rng: np.random.Generator,
                    no_time_split: bool = False) -> Scene:
    """Two children per listed row: jointly sampled means, shrunk scales."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    children = scene.select(np.repeat(idx, 2))
    children.means[:] = sample_split_means(scene, idx, rng,
                                           no_time_split=no_time_split)
    children.log_scales[:] -= np.log(SCALE_SHRINK)
    return children


def clone_gaussians(scene: Scene, idx, grad_dir, step) -> Scene:
    """Copies displaced by one optimizer-style step against the gradient.

    step is the per-component learning-rate vector (4,); grad_dir is the
    (len(idx), 4) mean gradient of the rows being cloned.
    """
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    clones = scene.select(idx)
    clones.means[:] -= np.asarray(step, dtype=np.float64) * \
        np.atleast_2d(np.asarray(grad_dir, dtype=np.float64))
    return clones


def reset_opacity(scene: Scene, value: float = OPACITY_RESET_VALUE) -> None:
    """Knock every Gaussian back to near-transparent (in place)."""
    scene.opacity_logits[:] = float(logit(value))


def densify_and_prune(scene: Scene, stats: GradStats, *,
                      extent: float,
                      grad_threshold_spatial: float,
                      grad_threshold_temporal: float,
                      opacity_prune_threshold: float,
                      clone_step,
                      rng: np.random.Generator,
                      percent_dense: float = PERCENT_DENSE,
                      max_radius_frac: float = 0.8,
                      max_scale_frac: float = 0.25,
                      no_time_split: bool = False):
    """One density-control pass.

    Returns (new_scene, report, source_rows): report counts clones, split
    parents, and pruned rows; source_rows maps each surviving row to its
    row in the input scene, or -1 for rows created this pass (clones and
    split children start with fresh optimizer state).
    """
    n = scene.n_gaussians
    if stats.n != n:
        raise ValueError(f"stats cover {stats.n} Gaussians, scene has {n}")

    need = (stats.mean_gnorm2d() >= grad_threshold_spatial) | \
           (stats.mean_gmu_t() >= grad_threshold_temporal)
    max_spatial = activated_scales(scene)[:, :3].max(axis=1)
    clone_mask = need & (max_spatial <= percent_dense * extent)
    split_mask = need & ~clone_mask

    pieces = [scene.select(~split_mask)]
    sources = [np.flatnonzero(~split_mask)]
    radius_frac = [stats.max_radius_frac[~split_mask]]

    clone_idx = np.flatnonzero(clone_mask)
    if len(clone_idx):
        pieces.append(clone_gaussians(
            scene, clone_idx, stats.mean_grad_mean4()[clone_idx], clone_step))
        sources.append(np.full(len(clone_idx), -1, dtype=np.int64))
        radius_frac.append(np.zeros(len(clone_idx)))

    split_idx = np.flatnonzero(split_mask)
    if len(split_idx):
        pieces.append(split_gaussians(scene, split_idx, rng,
                                      no_time_split=no_time_split))
        sources.append(np.full(2 * len(split_idx), -1, dtype=np.int64))
        radius_frac.append(np.zeros(2 * len(split_idx)))

    grown = pieces[0]
    for piece in pieces[1:]:
        grown = concat_scenes(grown, piece)
    source_rows = np.concatenate(sources)
    radius_frac = np.concatenate(radius_frac)

    prune = (activated_opacity(grown) < opacity_prune_threshold) | \
            (radius_frac > max_radius_frac) | \
            (activated_scales(grown)[:, :3].max(axis=1) > max_scale_frac * extent)
    keep = ~prune
    result = grown.select(keep)
    report = {
        "cloned": int(len(clone_idx)),
        "split": int(len(split_idx)),
        "pruned": int(prune.sum()),
        "total": int(result.n_gaussians),
    }
    return result, report, source_rows[keep]
