"""Shared scene/camera builders for the test suite."""

from __future__ import annotations

import numpy as np

from splat4d.cameras import Camera
from splat4d.harmonics import dc_from_rgb
from splat4d.scene import Scene, ShConfig, logit


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera rigid transform looking from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
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


def ring_camera(index: int, count: int, radius: float = 4.0,
                height: float = 0.8, width: int = 64, hpix: int = 64,
                fov_deg: float = 50.0, near: float = 0.1,
                cam_id: str | None = None) -> Camera:
    """Camera number `index` on a ring around the origin, looking inward."""
    ang = 2.0 * np.pi * index / count
    eye = np.array([radius * np.cos(ang), height, radius * np.sin(ang)])
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(
        fx=f, fy=f, cx=width / 2.0, cy=hpix / 2.0,
        width=width, height=hpix,
        world_to_camera=look_at(eye, np.zeros(3)),
        near=near,
        cam_id=cam_id if cam_id is not None else f"cam{index}",
    )


def random_scene(rng: np.random.Generator, n: int,
                 sh_config: ShConfig | None = None,
                 duration: float = 1.0,
                 spread: float = 1.0,
                 scale_range=(0.05, 0.3),
                 t_scale_range=(0.2, 3.0),
                 opacity_range=(0.05, 0.95),
                 sh_std: float = 0.3) -> Scene:
    """Random well-conditioned scene centered on the origin, f32-snapped."""
    cfg = sh_config if sh_config is not None else ShConfig(l_max=2, n_max=1)
    means = np.zeros((n, 4))
    means[:, :3] = rng.uniform(-spread, spread, (n, 3))
    means[:, 3] = rng.uniform(0.0, duration, n)
    log_scales = np.empty((n, 4))
    log_scales[:, :3] = rng.uniform(np.log(scale_range[0]),
                                    np.log(scale_range[1]), (n, 3))
    log_scales[:, 3] = rng.uniform(np.log(t_scale_range[0]),
                                   np.log(t_scale_range[1]), n)
    rl = rng.normal(size=(n, 4))
    rl /= np.linalg.norm(rl, axis=1, keepdims=True)
    rr = rng.normal(size=(n, 4))
    rr /= np.linalg.norm(rr, axis=1, keepdims=True)
    opac = logit(rng.uniform(*opacity_range, n))
    sh = rng.normal(0.0, sh_std, (n, 3, cfg.n_basis))
    scene = Scene(means, log_scales, rl, rr, opac, sh,
                  duration=duration, sh_config=cfg)
    scene.quantize_f32()
    return scene


def blob_scene(positions, colors, sigmas, opacities, t_sigmas=None,
               duration: float = 1.0, t_centers=None,
               sh_config: ShConfig | None = None) -> Scene:
    """Axis-aligned isotropic blobs with flat (DC-only) colors."""
    cfg = sh_config if sh_config is not None else ShConfig(l_max=0, n_max=0)
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = positions.shape[0]
    means = np.zeros((n, 4))
    means[:, :3] = positions
    if t_centers is not None:
        means[:, 3] = t_centers
    log_scales = np.zeros((n, 4))
    log_scales[:, :3] = np.log(np.asarray(sigmas, dtype=np.float64))[:, None] \
        if np.ndim(sigmas) == 1 else np.log(sigmas)
    ts = np.full(n, 10.0) if t_sigmas is None else np.asarray(t_sigmas)
    log_scales[:, 3] = np.log(ts)
    rotors = np.zeros((n, 4))
    rotors[:, 0] = 1.0
    sh = np.zeros((n, 3, cfg.n_basis))
    sh[:, :, 0] = dc_from_rgb(np.asarray(colors, dtype=np.float64))
    scene = Scene(means, log_scales, rotors.copy(), rotors.copy(),
                  logit(np.asarray(opacities, dtype=np.float64)), sh,
                  duration=duration, sh_config=cfg)
    scene.quantize_f32()
    return scene


def coupled_params(sigma3, t_sigma, velocity):
    """Scales and rotors whose 4D covariance drifts the mean at `velocity`.

    Built by factoring the desired covariance A A^T (A upper-triangular with
    the space-time column v * t_sigma) through an eigendecomposition, which
    is an independent route from the library's own constructions.
    """
    from splat4d.gaussians import matrix_to_rotor

    a = np.zeros((4, 4))
    a[(0, 1, 2), (0, 1, 2)] = sigma3
    a[3, 3] = t_sigma
    a[:3, 3] = np.asarray(velocity, dtype=np.float64) * t_sigma
    cov = a @ a.T
    lam, u = np.linalg.eigh(cov)
    if np.linalg.det(u) < 0:
        u = u.copy()
        u[:, 0] = -u[:, 0]
    q_left, q_right = matrix_to_rotor(u)
    return np.log(np.sqrt(lam)), q_left, q_right


def moving_blob_scene(positions, colors, sigmas, opacities, t_sigmas,
                      velocities, t_centers, duration: float = 1.0) -> Scene:
    """Isotropic DC-colored blobs whose means translate at fixed velocity."""
    cfg = ShConfig(l_max=0, n_max=0)
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = positions.shape[0]
    means = np.zeros((n, 4))
    means[:, :3] = positions
    means[:, 3] = t_centers
    log_scales = np.zeros((n, 4))
    rl = np.zeros((n, 4))
    rr = np.zeros((n, 4))
    for i in range(n):
        s3 = np.full(3, sigmas[i]) if np.ndim(sigmas[i]) == 0 \
            else np.asarray(sigmas[i], dtype=np.float64)
        log_scales[i], rl[i], rr[i] = coupled_params(
            s3, t_sigmas[i], velocities[i])
    sh = np.zeros((n, 3, cfg.n_basis))
    sh[:, :, 0] = dc_from_rgb(np.asarray(colors, dtype=np.float64))
    scene = Scene(means, log_scales, rl, rr,
                  logit(np.asarray(opacities, dtype=np.float64)), sh,
                  duration=duration, sh_config=cfg)
    scene.quantize_f32()
    return scene
