"""Per-frame splat preparation and the analytic geometry backward pass.

prepare_frame turns a scene into flat per-splat arrays for one (camera, t):
condition every 4D Gaussian at t, project the conditional 3D Gaussian to a
screen-space mean + inverse 2x2 covariance, evaluate the view/time color,
cull (temporal marginal, near plane, screen bounds) and depth-sort.  All of
it is vectorized over the whole scene; the per-pixel work lives in the
compositing kernels.

geometry_backward consumes the per-splat gradients the compositing backward
produces (d mean2d, d conic, d weight, d color) and chains them onto the
scene parameters.  Every formula here is exercised by finite-difference
tests; when editing, keep forward and backward in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from ..cameras import DILATION_2D, Camera
from ..gaussians import (
    LEFT_BASIS,
    RIGHT_BASIS,
    left_isoclinic,
    normalize_quaternion,
    right_isoclinic,
    rot3_from_quat,
)
from ..harmonics import sh_basis, sh_basis_with_grads
from ..scene import MIN_SCALE, Scene, activated_opacity, activated_scales


@dataclass
class FrameGeometry:
    """Visible splats of one frame, depth-sorted front to back."""

    width: int
    height: int
    vis_idx: np.ndarray      # (M,) indices into the scene
    depth: np.ndarray        # (M,) camera-frame z of the conditional mean
    mean2d: np.ndarray       # (M, 2) pixel-space centers
    conic: np.ndarray        # (M, 3) inverse 2D covariance [c00, c01, c11]
    radius: np.ndarray       # (M,) bounding radius in pixels
    boxes: np.ndarray        # (M, 4) int32 pixel bounds x0, x1, y0, y1
    avals: np.ndarray        # (M,) opacity * temporal marginal
    colors: np.ndarray       # (M, 3) clamped RGB
    cache: dict = field(default_factory=dict)

    @property
    def n_visible(self) -> int:
        return self.vis_idx.shape[0]


def _empty_geometry(width, height):
    return FrameGeometry(
        width=width,
        height=height,
        vis_idx=np.zeros(0, dtype=np.int64),
        depth=np.zeros(0),
        mean2d=np.zeros((0, 2)),
        conic=np.zeros((0, 3)),
        radius=np.zeros(0),
        boxes=np.zeros((0, 4), dtype=np.int32),
        avals=np.zeros(0),
        colors=np.zeros((0, 3)),
    )


def _condition_all(scene: Scene, t: float, no_4drot: bool):
    """Conditional 3D Gaussians at t for every splat, plus backward cache."""
    s = activated_scales(scene)
    floored = np.exp(scene.log_scales) < MIN_SCALE
    dt = float(t) - scene.means[:, 3]
    cache = {"s": s, "floored": floored, "dt": dt}
    if no_4drot:
        # Spatial rotation only: the time axis stays decoupled, so the
        # conditional mean is constant in t and the right rotor is unused.
        qln, nl = normalize_quaternion(scene.rotors_left)
        r3 = rot3_from_quat(qln)
        m3 = r3 * s[:, None, :3]
        cov3 = m3 @ m3.transpose(0, 2, 1)
        c_tt = s[:, 3] ** 2
        cond_mean = np.broadcast_to(scene.means[:, :3], cov3.shape[:1] + (3,)).copy()
        cache.update(qln=qln, nl=nl, r3=r3, m3=m3, c_tt=c_tt)
    else:
        qln, nl = normalize_quaternion(scene.rotors_left)
        qrn, nr = normalize_quaternion(scene.rotors_right)
        lmat = left_isoclinic(qln)
        rmat = right_isoclinic(qrn)
        rot = lmat @ rmat
        m4 = rot * s[:, None, :]
        cov4 = m4 @ m4.transpose(0, 2, 1)
        b = cov4[:, :3, 3]
        c_tt = cov4[:, 3, 3]
        gain = b / c_tt[:, None]
        cond_mean = scene.means[:, :3] + gain * dt[:, None]
        cov3 = cov4[:, :3, :3] - gain[:, :, None] * b[:, None, :]
        cov3 = 0.5 * (cov3 + cov3.transpose(0, 2, 1))
        cache.update(qln=qln, nl=nl, qrn=qrn, nr=nr, lmat=lmat, rmat=rmat,
                     rot=rot, m4=m4, b=b, c_tt=c_tt, gain=gain)
    marginal = np.exp(-0.5 * dt * dt / c_tt)
    cache["marginal"] = marginal
    return cond_mean, cov3, marginal, cache


def prepare_frame(scene: Scene, cam: Camera, t: float, *,
                  radius_sigma: float = 3.0,
                  marginal_threshold: float = 0.05,
                  no_4drot: bool = False,
                  timings: dict | None = None) -> FrameGeometry:
    t_start = perf_counter()
    sort_seconds = 0.0
    if scene.n_gaussians == 0:
        if timings is not None:
            timings["cull"] = timings.get("cull", 0.0)
            timings["sort"] = timings.get("sort", 0.0)
        return _empty_geometry(cam.width, cam.height)

    cond_mean, cov3, marginal, cache = _condition_all(scene, t, no_4drot)
    alpha = activated_opacity(scene)
    cache["alpha"] = alpha

    w = cam.rotation
    x_cam = cond_mean @ w.T + cam.world_to_camera[:3, 3]
    z = x_cam[:, 2]
    keep = (marginal >= marginal_threshold) & (z > cam.near)
    if not keep.any():
        if timings is not None:
            timings["cull"] = timings.get("cull", 0.0) + perf_counter() - t_start
            timings["sort"] = timings.get("sort", 0.0)
        return _empty_geometry(cam.width, cam.height)

    zs = np.where(np.abs(z) < 1e-12, 1e-12, z)
    u = cam.fx * x_cam[:, 0] / zs + cam.cx
    v = cam.fy * x_cam[:, 1] / zs + cam.cy
    zero = np.zeros_like(zs)
    jrow0 = np.stack([cam.fx / zs, zero, -cam.fx * x_cam[:, 0] / zs ** 2], axis=-1)
    jrow1 = np.stack([zero, cam.fy / zs, -cam.fy * x_cam[:, 1] / zs ** 2], axis=-1)
    jac = np.stack([jrow0, jrow1], axis=-2)

    cov_cam = np.einsum("ij,njk,lk->nil", w, cov3, w)
    cov2 = jac @ cov_cam @ jac.transpose(0, 2, 1) + DILATION_2D * np.eye(2)
    c00, c01, c11 = cov2[:, 0, 0], cov2[:, 0, 1], cov2[:, 1, 1]
    det = c00 * c11 - c01 * c01
    mid = 0.5 * (c00 + c11)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = radius_sigma * np.sqrt(np.maximum(lam_max, 0.0))

    x0 = np.clip(np.floor(u - radius), 0, cam.width).astype(np.int32)
    x1 = np.clip(np.ceil(u + radius), 0, cam.width).astype(np.int32)
    y0 = np.clip(np.floor(v - radius), 0, cam.height).astype(np.int32)
    y1 = np.clip(np.ceil(v + radius), 0, cam.height).astype(np.int32)
    keep &= (x1 > x0) & (y1 > y0)
    if not keep.any():
        if timings is not None:
            timings["cull"] = timings.get("cull", 0.0) + perf_counter() - t_start
            timings["sort"] = timings.get("sort", 0.0)
        return _empty_geometry(cam.width, cam.height)

    vis = np.flatnonzero(keep)
    t_sort = perf_counter()
    order = np.lexsort((vis, z[vis]))
    sort_seconds = perf_counter() - t_sort
    vis = vis[order]

    inv_det = 1.0 / det[vis]
    conic = np.stack(
        [c11[vis] * inv_det, -c01[vis] * inv_det, c00[vis] * inv_det], axis=-1
    )

    # View/time color of the visible splats.
    vraw = cond_mean[vis] - cam.center
    rnorm = np.linalg.norm(vraw, axis=-1)
    dirs = vraw / rnorm[:, None]
    basis = sh_basis(dirs, cache["dt"][vis], scene.sh_config)
    sh_vis = scene.sh[vis]
    raw_color = np.einsum("mcb,mb->mc", sh_vis, basis) + 0.5
    colors = np.maximum(raw_color, 0.0)

    geom = FrameGeometry(
        width=cam.width,
        height=cam.height,
        vis_idx=vis,
        depth=z[vis].copy(),
        mean2d=np.ascontiguousarray(np.stack([u[vis], v[vis]], axis=-1)),
        conic=np.ascontiguousarray(conic),
        radius=radius[vis].copy(),
        boxes=np.ascontiguousarray(
            np.stack([x0[vis], x1[vis], y0[vis], y1[vis]], axis=-1)
        ),
        avals=np.ascontiguousarray(alpha[vis] * marginal[vis]),
        colors=np.ascontiguousarray(colors),
    )
    vc = {k: val[vis] for k, val in cache.items()}
    vc.update(
        no_4drot=no_4drot,
        cond_mean=cond_mean[vis],
        cov3=cov3[vis],
        cov_cam=cov_cam[vis],
        x_cam=x_cam[vis],
        jac=jac[vis],
        vraw=vraw,
        rnorm=rnorm,
        dirs=dirs,
        sh_vis=sh_vis,
        raw_color=raw_color,
    )
    geom.cache = vc
    if timings is not None:
        timings["cull"] = (timings.get("cull", 0.0)
                           + perf_counter() - t_start - sort_seconds)
        timings["sort"] = timings.get("sort", 0.0) + sort_seconds
    return geom


def _rot3_quat_backward(qn, d_rot):
    """Chain (M, 3, 3) rotation gradients onto unit quaternions (w, x, y, z)."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    zero = np.zeros_like(w)

    def mat(rows):
        return np.stack(
            [np.stack(r, axis=-1) for r in rows], axis=-2
        )

    dw = 2.0 * mat([[zero, -z, y], [z, zero, -x], [-y, x, zero]])
    dx = 2.0 * mat([[zero, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dy = 2.0 * mat([[-2 * y, x, w], [x, zero, z], [-w, z, -2 * y]])
    dz = 2.0 * mat([[-2 * z, -w, x], [w, -2 * z, y], [x, y, zero]])
    partials = np.stack([dw, dx, dy, dz], axis=1)  # (M, 4, 3, 3)
    return np.einsum("mij,mqij->mq", d_rot, partials)


def _normalize_backward(qn, norm, d_qn):
    """Gradient through q_hat = q / |q|."""
    inner = np.einsum("mq,mq->m", d_qn, qn)
    return (d_qn - qn * inner[:, None]) / norm[:, None]


def geometry_backward(scene: Scene, cam: Camera, geom: FrameGeometry,
                      d_mean2d, d_conic, d_aval, d_color):
    """Chain per-splat screen-space gradients onto scene parameters.

    Returns (grads, stats): grads maps parameter array names to full (N, ...)
    gradient arrays; stats carries per-visible diagnostics for densification
    (screen-space positional gradient norms, |d mu_t|, 4D mean gradient).
    """
    n = scene.n_gaussians
    grads = {
        "means": np.zeros((n, 4)),
        "log_scales": np.zeros((n, 4)),
        "rotors_left": np.zeros((n, 4)),
        "rotors_right": np.zeros((n, 4)),
        "opacity_logits": np.zeros(n),
        "sh": np.zeros_like(scene.sh),
    }
    stats = {
        "vis_idx": geom.vis_idx,
        "gnorm2d": np.zeros(0),
        "gmu_t": np.zeros(0),
        "grad_mean4": np.zeros((0, 4)),
        "radius_frac": np.zeros(0),
    }
    m = geom.n_visible
    if m == 0:
        return grads, stats

    c = geom.cache
    vis = geom.vis_idx
    alpha, marg = c["alpha"], c["marginal"]
    dt, c_tt = c["dt"], c["c_tt"]
    s = c["s"]
    w = cam.rotation

    # Weight factors: aval = alpha * marginal.
    d_alpha = d_aval * marg
    d_marg = d_aval * alpha
    d_logit = d_alpha * alpha * (1.0 - alpha)

    # Color: raw = sh . basis + 0.5, clamped below at 0.
    live = c["raw_color"] > 0.0
    d_raw = d_color * live
    basis, db_ddir, db_dt = sh_basis_with_grads(c["dirs"], dt, scene.sh_config)
    d_sh = np.einsum("mc,mb->mcb", d_raw, basis)
    d_basis = np.einsum("mc,mcb->mb", d_raw, c["sh_vis"])
    d_dir = np.einsum("mb,mbd->md", d_basis, db_ddir)
    d_trel = np.einsum("mb,mb->m", d_basis, db_dt)
    # dir = v / |v|: project onto the sphere tangent, then scale by 1/|v|.
    radial = np.einsum("md,md->m", d_dir, c["dirs"])
    d_mu_c = (d_dir - c["dirs"] * radial[:, None]) / c["rnorm"][:, None]
    d_mu_t = -d_trel

    # Temporal marginal exp(-dt^2 / (2 c_tt)); dt = t - mu_t.
    d_mu_t = d_mu_t + d_marg * marg * dt / c_tt
    d_ctt = d_marg * marg * 0.5 * dt * dt / (c_tt * c_tt)

    # Projection: mean2d and the local Jacobian both depend on x_cam.
    jac = c["jac"]
    x_cam = c["x_cam"]
    d_xcam = np.einsum("mij,mi->mj", jac, d_mean2d)

    # conic = inv(cov2): symmetric matrix gradient.
    d_q = np.empty((m, 2, 2))
    d_q[:, 0, 0] = d_conic[:, 0]
    d_q[:, 0, 1] = 0.5 * d_conic[:, 1]
    d_q[:, 1, 0] = 0.5 * d_conic[:, 1]
    d_q[:, 1, 1] = d_conic[:, 2]
    qmat = np.empty((m, 2, 2))
    qmat[:, 0, 0] = geom.conic[:, 0]
    qmat[:, 0, 1] = geom.conic[:, 1]
    qmat[:, 1, 0] = geom.conic[:, 1]
    qmat[:, 1, 1] = geom.conic[:, 2]
    d_cov2 = -qmat @ d_q @ qmat

    # cov2 = J V J^T + dilation; V is the camera-frame conditional covariance.
    vmat = c["cov_cam"]
    d_jac = 2.0 * np.einsum("mij,mjk,mkl->mil", d_cov2, jac, vmat)
    d_v = np.einsum("mji,mjk,mkl->mil", jac, d_cov2, jac)

    # J entries depend on x_cam: J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]].
    fx, fy = cam.fx, cam.fy
    xc, yc, zc = x_cam[:, 0], x_cam[:, 1], x_cam[:, 2]
    inv_z2 = 1.0 / (zc * zc)
    inv_z3 = inv_z2 / zc
    d_xcam[:, 0] += d_jac[:, 0, 2] * (-fx * inv_z2)
    d_xcam[:, 1] += d_jac[:, 1, 2] * (-fy * inv_z2)
    d_xcam[:, 2] += (
        d_jac[:, 0, 0] * (-fx * inv_z2)
        + d_jac[:, 1, 1] * (-fy * inv_z2)
        + d_jac[:, 0, 2] * (2.0 * fx * xc * inv_z3)
        + d_jac[:, 1, 2] * (2.0 * fy * yc * inv_z3)
    )

    # V = W cov3 W^T and x_cam = W mu_c + t.
    d_cov3 = np.einsum("ji,mjk,kl->mil", w, d_v, w)
    d_mu_c = d_mu_c + d_xcam @ w

    floored = c["floored"]
    if c["no_4drot"]:
        g3s = d_cov3 + d_cov3.transpose(0, 2, 1)
        d_m3 = g3s @ c["m3"]
        d_rot3 = d_m3 * s[:, None, :3]
        d_s3 = np.einsum("mij,mij->mj", d_m3, c["r3"])
        d_st = d_ctt * 2.0 * s[:, 3]
        d_s4 = np.concatenate([d_s3, d_st[:, None]], axis=-1)
        d_qln = _rot3_quat_backward(c["qln"], d_rot3)
        d_ql = _normalize_backward(c["qln"], c["nl"], d_qln)
        d_qr = np.zeros((m, 4))
        d_mu_xyz = d_mu_c
    else:
        b, gain = c["b"], c["gain"]
        g3 = d_cov3
        d_b = -np.einsum("mij,mj->mi", g3 + g3.transpose(0, 2, 1), gain)
        d_ctt = d_ctt + np.einsum("mi,mij,mj->m", b, g3, b) / (c_tt * c_tt)
        # Conditional mean mu_c = mu_xyz + (dt / c_tt) b.
        d_b = d_b + d_mu_c * (dt / c_tt)[:, None]
        d_ctt = d_ctt - np.einsum("mi,mi->m", d_mu_c, b) * dt / (c_tt * c_tt)
        d_mu_t = d_mu_t - np.einsum("mi,mi->m", d_mu_c, gain)
        d_mu_xyz = d_mu_c

        g4 = np.zeros((m, 4, 4))
        g4[:, :3, :3] = g3
        g4[:, :3, 3] = d_b
        g4[:, 3, 3] = d_ctt
        d_m4 = (g4 + g4.transpose(0, 2, 1)) @ c["m4"]
        d_rot4 = d_m4 * s[:, None, :]
        d_s4 = np.einsum("mij,mij->mj", d_m4, c["rot"])
        d_lmat = np.einsum("mij,mkj->mik", d_rot4, c["rmat"])
        d_qln = np.einsum("mik,qik->mq", d_lmat, LEFT_BASIS)
        d_rmat = np.einsum("mji,mjk->mik", c["lmat"], d_rot4)
        d_qrn = np.einsum("mik,qik->mq", d_rmat, RIGHT_BASIS)
        d_ql = _normalize_backward(c["qln"], c["nl"], d_qln)
        d_qr = _normalize_backward(c["qrn"], c["nr"], d_qrn)

    d_log_scales = np.where(floored, 0.0, d_s4 * s)

    grads["means"][vis, :3] = d_mu_xyz
    grads["means"][vis, 3] = d_mu_t
    grads["log_scales"][vis] = d_log_scales
    grads["rotors_left"][vis] = d_ql
    grads["rotors_right"][vis] = d_qr
    grads["opacity_logits"][vis] = d_logit
    grads["sh"][vis] = d_sh

    stats["gnorm2d"] = np.linalg.norm(d_mean2d, axis=-1)
    stats["gmu_t"] = np.abs(d_mu_t)
    stats["grad_mean4"] = np.concatenate([d_mu_xyz, d_mu_t[:, None]], axis=-1)
    stats["radius_frac"] = geom.radius / geom.width
    return grads, stats
