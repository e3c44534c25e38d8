"""Synthetic dynamic scenes with analytic ground truth.

A SyntheticSpec describes a handful of Gaussian blobs, each with a motion
model, plus a ring of cameras and a time grid.  make_synthetic_scene turns
it into a ground-truth Scene (motion encoded exactly in the 4D covariance
coupling, so the conditional mean traces the blob's trajectory) and a
Dataset whose images come from the brute-force reference renderer.

Motion models:
  static         fixed position, near-constant temporal marginal
  translate(v)   linear motion: the space-time covariance is built from a
                 triangular factor with the time column v * t_sigma, which
                 makes the conditional mean move at exactly v
  orbit(omega)   circular motion about a vertical axis, approximated by a
                 chain of translate segments with narrow temporal windows
  appear(t0)     fixed position with a small temporal extent centered on
                 t0: culled (marginal < 0.05) for |t - t0| > 2.4477 s_t

Analytic per-frame flow maps (screen displacement over one timestep) are
derived from the known trajectories and composited with the reference
renderer's own weights, for evaluating flow emergence after training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cameras import Camera, project_point
from .errors import ShapeMismatchError, Splat4DError
from .gaussians import matrix_to_rotor
from .harmonics import dc_from_rgb
from .raster import oracle_render
from .scene import Scene, ShConfig, logit
from .scene_io import (
    Dataset,
    Frame,
    camera_to_json,
    save_checkpoint,
    save_flow,
    save_image,
)

STATIC_T_SIGMA = 10.0    # effectively always-on marginal
TRANSLATE_T_SIGMA = 2.0  # keeps the coupled covariance float32-friendly
APPEAR_T_SIGMA_FRAC = 0.02
ORBIT_SEGMENTS_PER_TURN = 24


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """World-to-camera rigid transform looking from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ShapeMismatchError("look_at: eye and target coincide")
    fwd = fwd / norm
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(fwd, up)) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(up, fwd)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    w2c = np.eye(4)
    w2c[:3, :3] = np.stack([right, down, fwd])
    w2c[:3, 3] = -w2c[:3, :3] @ eye
    return w2c


def ring_camera(index: int, count: int, *, radius: float = 4.0,
                height: float = 0.8, width: int = 64, image_height: int = 64,
                fov_deg: float = 50.0, near: float = 0.1,
                target=(0.0, 0.0, 0.0)) -> Camera:
    """Camera `index` of `count` on a horizontal ring, looking at target."""
    ang = 2.0 * np.pi * index / count
    eye = np.array([radius * np.cos(ang), height, radius * np.sin(ang)])
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(fx=f, fy=f, cx=width / 2.0, cy=image_height / 2.0,
                  width=width, height=image_height,
                  world_to_camera=look_at(eye, target), near=near,
                  cam_id=f"cam{index}")


# ---------------------------------------------------------------------------
# Scene specification


@dataclass(frozen=True)
class Blob:
    """One synthetic Gaussian blob and its motion model.

    position is the conditional mean at time 0 for static/translate blobs,
    the position on the orbit at time 0 for orbit blobs, and the fixed
    position for appear blobs.  t_sigma of None picks the motion default.
    """

    position: tuple
    color: tuple
    sigma: float = 0.2
    opacity: float = 0.8
    motion: str = "static"
    velocity: tuple = (0.0, 0.0, 0.0)   # translate
    omega: float = 0.0                  # orbit: radians per unit time, +y axis
    orbit_center: tuple = (0.0, 0.0, 0.0)
    t0: float = 0.5                     # appear: normalized center time
    t_sigma: float | None = None

    def validate(self, duration: float) -> None:
        if self.motion not in ("static", "translate", "orbit", "appear"):
            raise Splat4DError(f"unknown motion {self.motion!r}")
        if not self.sigma > 0:
            raise ShapeMismatchError(f"blob sigma must be positive, "
                                     f"got {self.sigma}")
        if not 0.0 < self.opacity < 1.0:
            raise ShapeMismatchError(f"blob opacity must be in (0, 1), "
                                     f"got {self.opacity}")
        color = np.asarray(self.color, dtype=np.float64)
        if color.shape != (3,) or color.min() < 0 or color.max() > 1:
            raise ShapeMismatchError("blob color must be 3 values in [0, 1]")
        if len(self.position) != 3:
            raise ShapeMismatchError("blob position must have 3 components")
        if self.t_sigma is not None and not self.t_sigma > 0:
            raise ShapeMismatchError("blob t_sigma must be positive")
        if self.motion == "appear" and not 0.0 <= self.t0 <= duration:
            raise ShapeMismatchError(
                f"appear t0 must lie within [0, {duration}], got {self.t0}")
        if self.motion == "orbit" and self.omega == 0.0:
            raise ShapeMismatchError("orbit blob needs a nonzero omega")


@dataclass(frozen=True)
class SyntheticSpec:
    blobs: tuple = ()
    n_cameras: int = 8
    n_timesteps: int = 20
    width: int = 64
    height: int = 64
    duration: float = 1.0
    background: tuple = (0.0, 0.0, 0.0)
    camera_radius: float = 4.0
    camera_height: float = 0.8
    fov_deg: float = 50.0
    near: float = 0.1
    holdout_camera: int = 0
    name: str = "custom"

    def validate(self) -> None:
        if not self.blobs:
            raise Splat4DError("synthetic spec needs at least one blob")
        if self.n_cameras < 1 or self.n_timesteps < 1:
            raise ShapeMismatchError("need at least one camera and timestep")
        if self.width < 1 or self.height < 1:
            raise ShapeMismatchError("image size must be positive")
        if not self.duration > 0:
            raise ShapeMismatchError("duration must be positive")
        bg = np.asarray(self.background, dtype=np.float64)
        if bg.shape != (3,) or bg.min() < 0 or bg.max() > 1:
            raise ShapeMismatchError("background must be 3 values in [0, 1]")
        if not 0 <= self.holdout_camera < self.n_cameras:
            raise ShapeMismatchError(
                f"holdout camera {self.holdout_camera} outside the ring "
                f"of {self.n_cameras}")
        for blob in self.blobs:
            blob.validate(self.duration)

    def cameras(self) -> dict[str, Camera]:
        return {f"cam{i}": ring_camera(
            i, self.n_cameras, radius=self.camera_radius,
            height=self.camera_height, width=self.width,
            image_height=self.height, fov_deg=self.fov_deg, near=self.near)
            for i in range(self.n_cameras)}

    def times(self) -> np.ndarray:
        if self.n_timesteps == 1:
            return np.array([0.0])
        return np.linspace(0.0, self.duration, self.n_timesteps)

    def flow_dt(self) -> float:
        if self.n_timesteps < 2:
            return self.duration
        return self.duration / (self.n_timesteps - 1)


def three_blobs_preset() -> SyntheticSpec:
    """One static, one translating, one appearing blob on an 8-camera ring."""
    return SyntheticSpec(
        name="three-blobs",
        blobs=(
            Blob(position=(-0.45, -0.1, 0.45), color=(0.85, 0.25, 0.2),
                 sigma=0.2, opacity=0.85, motion="static"),
            Blob(position=(-0.55, 0.15, -0.35), color=(0.25, 0.8, 0.3),
                 sigma=0.18, opacity=0.8, motion="translate",
                 velocity=(1.1, 0.0, 0.0)),
            Blob(position=(0.05, -0.3, 0.05), color=(0.3, 0.4, 0.9),
                 sigma=0.22, opacity=0.9, motion="appear", t0=0.65,
                 t_sigma=0.12),
        ),
        n_cameras=8, n_timesteps=20, width=64, height=64)


def orbit_preset() -> SyntheticSpec:
    """A single blob circling the origin once, for motion-model coverage."""
    return SyntheticSpec(
        name="orbit",
        blobs=(
            Blob(position=(0.6, 0.0, 0.0), color=(0.8, 0.7, 0.2),
                 sigma=0.18, opacity=0.85, motion="orbit",
                 omega=2.0 * np.pi),
        ),
        n_cameras=8, n_timesteps=20, width=64, height=64)


PRESETS = {
    "three-blobs": three_blobs_preset,
    "orbit": orbit_preset,
}


# ---------------------------------------------------------------------------
# Ground-truth construction


@dataclass
class _Track:
    """Linear spacetime track of one constructed Gaussian row."""

    anchor: np.ndarray    # conditional mean at time mu_t (3,)
    velocity: np.ndarray  # world units per unit time (3,)
    mu_t: float
    t_sigma: float
    sigma: float
    color: np.ndarray
    opacity: float

    def center(self, t: float) -> np.ndarray:
        return self.anchor + self.velocity * (t - self.mu_t)


def _blob_tracks(blob: Blob, duration: float) -> list[_Track]:
    color = np.asarray(blob.color, dtype=np.float64)
    pos = np.asarray(blob.position, dtype=np.float64)
    if blob.motion == "static":
        ts = blob.t_sigma if blob.t_sigma is not None else STATIC_T_SIGMA
        return [_Track(anchor=pos, velocity=np.zeros(3),
                       mu_t=duration / 2.0, t_sigma=ts, sigma=blob.sigma,
                       color=color, opacity=blob.opacity)]
    if blob.motion == "translate":
        ts = blob.t_sigma if blob.t_sigma is not None else TRANSLATE_T_SIGMA
        v = np.asarray(blob.velocity, dtype=np.float64)
        mu_t = duration / 2.0
        return [_Track(anchor=pos + v * mu_t, velocity=v, mu_t=mu_t,
                       t_sigma=ts, sigma=blob.sigma, color=color,
                       opacity=blob.opacity)]
    if blob.motion == "appear":
        ts = blob.t_sigma if blob.t_sigma is not None \
            else APPEAR_T_SIGMA_FRAC * duration
        return [_Track(anchor=pos, velocity=np.zeros(3), mu_t=blob.t0,
                       t_sigma=ts, sigma=blob.sigma, color=color,
                       opacity=blob.opacity)]
    # Orbit: a chain of short linear segments along the circle, each owning
    # a narrow temporal window so the blended motion follows the chords.
    turns = abs(blob.omega) * duration / (2.0 * np.pi)
    n_seg = max(8, int(np.ceil(ORBIT_SEGMENTS_PER_TURN * turns)))
    spacing = duration / n_seg
    center = np.asarray(blob.orbit_center, dtype=np.float64)
    r0 = pos - center
    tracks = []
    for k in range(n_seg):
        mu_t = (k + 0.5) * spacing
        theta = blob.omega * mu_t
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        r = rot @ r0
        v = blob.omega * np.array([r[2], 0.0, -r[0]])
        tracks.append(_Track(anchor=center + r, velocity=v, mu_t=mu_t,
                             t_sigma=spacing / 2.0, sigma=blob.sigma,
                             color=color, opacity=blob.opacity))
    return tracks


def _coupled_row(sigma: float, t_sigma: float, velocity) -> tuple:
    """(log_scales, q_left, q_right) of the covariance A A^T where A is
    upper triangular with spatial diagonal sigma, time diagonal t_sigma,
    and time column velocity * t_sigma — the factorization that makes the
    conditional mean move at exactly `velocity` while keeping the
    conditional spatial covariance sigma^2 I."""
    a = np.diag([sigma, sigma, sigma, t_sigma]).astype(np.float64)
    a[:3, 3] = np.asarray(velocity, dtype=np.float64) * t_sigma
    cov = a @ a.T
    w, u = np.linalg.eigh(cov)
    w = np.maximum(w, 1e-14)
    if np.linalg.det(u) < 0:
        u = u.copy()
        u[:, 0] = -u[:, 0]
    q_left, q_right = matrix_to_rotor(u)
    return 0.5 * np.log(w), q_left, q_right


def spec_tracks(spec: SyntheticSpec) -> list[_Track]:
    """All Gaussian tracks of the expanded spec, blob order preserved."""
    tracks = []
    for blob in spec.blobs:
        tracks.extend(_blob_tracks(blob, spec.duration))
    return tracks


def scene_from_tracks(tracks, duration: float) -> Scene:
    cfg = ShConfig(l_max=0, n_max=0, period=duration)
    n = len(tracks)
    means = np.zeros((n, 4))
    log_scales = np.zeros((n, 4))
    rotors_left = np.zeros((n, 4))
    rotors_right = np.zeros((n, 4))
    opacity = np.zeros(n)
    sh = np.zeros((n, 3, 1))
    for i, track in enumerate(tracks):
        means[i, :3] = track.anchor
        means[i, 3] = track.mu_t
        log_scales[i], rotors_left[i], rotors_right[i] = _coupled_row(
            track.sigma, track.t_sigma, track.velocity)
        opacity[i] = logit(track.opacity)
        sh[i, :, 0] = dc_from_rgb(track.color)
    scene = Scene(means=means, log_scales=log_scales,
                  rotors_left=rotors_left, rotors_right=rotors_right,
                  opacity_logits=opacity, sh=sh, duration=duration,
                  sh_config=cfg)
    scene.quantize_f32()
    return scene


# ---------------------------------------------------------------------------
# Analytic flow


def analytic_flow_map(spec: SyntheticSpec, scene: Scene, tracks,
                      cam: Camera, t: float, dt: float) -> np.ndarray:
    """(H, W, 2) expected screen displacement over [t, t + dt].

    Per-Gaussian displacements come from the known linear tracks (projected
    conditional means at t and t + dt); per-pixel blending reuses the
    reference renderer's compositing weights by encoding each displacement
    in a constant color around a 0.5-gray background.
    """
    deltas = np.zeros((len(tracks), 2))
    for i, track in enumerate(tracks):
        uv0, d0 = project_point(cam, track.center(t))
        uv1, d1 = project_point(cam, track.center(t + dt))
        if d0 > cam.near and d1 > cam.near:
            deltas[i] = uv1 - uv0
    scale = 0.4 / max(1.0, np.abs(deltas).max())
    probe = scene.copy()
    probe.sh = np.zeros((len(tracks), 3, 1))
    probe.sh[:, 0, 0] = dc_from_rgb(0.5 + scale * deltas[:, 0])
    probe.sh[:, 1, 0] = dc_from_rgb(0.5 + scale * deltas[:, 1])
    probe.sh[:, 2, 0] = dc_from_rgb(np.asarray(0.5))
    out = oracle_render(probe, cam, t, background=(0.5, 0.5, 0.5))
    return (out.color[:, :, :2] - 0.5) / scale


# ---------------------------------------------------------------------------
# Dataset assembly


def make_synthetic_scene(spec: SyntheticSpec,
                         rng: np.random.Generator | None = None
                         ) -> tuple[Scene, Dataset]:
    """Ground-truth scene plus a Dataset of reference-rendered frames.

    The holdout camera's frames form the test split.  Images are kept in
    memory as float64 linear RGB (write_synthetic_dataset quantizes them to
    8-bit PNGs).  Deterministic: the result depends only on the given SyntheticSpec.
    """
    spec.validate()
    tracks = spec_tracks(spec)
    scene = scene_from_tracks(tracks, spec.duration)
    cameras = spec.cameras()
    times = spec.times()
    background = np.asarray(spec.background, dtype=np.float64)
    frames = []
    test_idx = []
    for ci, (cam_id, cam) in enumerate(cameras.items()):
        for ti, t in enumerate(times):
            out = oracle_render(scene, cam, float(t), background=background)
            idx = len(frames)
            frames.append(Frame(
                camera=cam_id, time=float(t) / spec.duration,
                image=out.color,
                path=f"images/{cam_id}_t{ti:03d}.png"))
            if ci == spec.holdout_camera:
                test_idx.append(idx)
    train_idx = [i for i in range(len(frames)) if i not in set(test_idx)]
    dataset = Dataset(root=Path("."), cameras=cameras, frames=frames,
                      background=background, duration=1.0,
                      source_duration=spec.duration, train_idx=train_idx,
                      test_idx=test_idx)
    return scene, dataset


def synthetic_flow_maps(spec: SyntheticSpec) -> list[np.ndarray]:
    """Analytic flow maps for every frame, in dataset frame order."""
    spec.validate()
    tracks = spec_tracks(spec)
    scene = scene_from_tracks(tracks, spec.duration)
    dt = spec.flow_dt()
    flows = []
    for cam in spec.cameras().values():
        for t in spec.times():
            flows.append(analytic_flow_map(spec, scene, tracks, cam,
                                           float(t), dt))
    return flows


def write_synthetic_dataset(spec: SyntheticSpec, out_dir,
                            rng: np.random.Generator | None = None
                            ) -> tuple[Scene, Dataset]:
    """Write a loadable dataset directory for the given SyntheticSpec.

    Layout: manifest.json, images/*.png (8-bit sRGB), flow/frame_XXX.npy
    (analytic screen flow over one timestep), gt_scene.g4ds, and
    synth_meta.json describing the generation parameters.
    """
    scene, dataset = make_synthetic_scene(spec, rng)
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "flow").mkdir(parents=True, exist_ok=True)

    entries = []
    for frame in dataset.frames:
        save_image(root / frame.path, frame.image)
        entries.append({"camera": frame.camera,
                        "time": frame.time * spec.duration,
                        "image": frame.path})
    manifest = {
        "duration": spec.duration,
        "background": [float(v) for v in dataset.background],
        "cameras": [camera_to_json(cam) for cam in
                    dataset.cameras.values()],
        "frames": entries,
        "test_frames": dataset.test_idx,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    for idx, flow in enumerate(synthetic_flow_maps(spec)):
        save_flow(root / "flow" / f"frame_{idx:03d}.npy", flow)

    save_checkpoint(scene, root / "gt_scene.g4ds")
    meta = {
        "preset": spec.name,
        "flow_dt": spec.flow_dt(),
        "flow_dt_normalized": spec.flow_dt() / spec.duration,
        "holdout_camera": f"cam{spec.holdout_camera}",
        "n_cameras": spec.n_cameras,
        "n_timesteps": spec.n_timesteps,
        "blobs": [asdict(b) for b in spec.blobs],
    }
    (root / "synth_meta.json").write_text(json.dumps(meta, indent=2))
    return scene, dataset
