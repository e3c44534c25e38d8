"""Rendering entry points: render, flow, the brute-force oracle, backward.

render composites conditioned-and-projected splats front to back over a
constant background.  Per-splat weight is

    w_i = marginal_i(t) * exp(-0.5 d^T conic_i d) * opacity_i

clamped at 0.99; blending per pixel stops once transmittance drops below
1e-4, and whatever transmittance is left multiplies the background.  The
returned color is clipped to [0, 1]; the backward pass treats the clip as a
saturating activation (zero gradient where it engages).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from time import perf_counter

import numpy as np

from ..cameras import Camera, project_covariance, project_point
from ..errors import Splat4DError
from ..gaussians import build_covariance, rot3_from_quat
from ..harmonics import eval_color
from ..scene import Scene, activated_opacity, activated_scales
from .backend import get_backend
from .binning import bin_splats
from .geometry import FrameGeometry, geometry_backward, prepare_frame


@dataclass(frozen=True)
class RenderOptions:
    """Knobs shared by render / flow / backward.

    radius_sigma bounds each splat's pixel footprint at that many standard
    deviations.  The rasterizer is compared against a no-truncation oracle
    at 1e-3; 3 sigma leaves ~1e-2 tails outside the box, so the default is
    wider (see the oracle-equivalence tests, which pin this empirically).
    """

    tile_size: int = 16
    radius_sigma: float = 5.0
    marginal_threshold: float = 0.05
    transmittance_floor: float = 1e-4
    weight_clamp: float = 0.99
    no_4drot: bool = False
    backend: str | None = None
    threads: int = 1


@dataclass
class RenderOutput:
    color: np.ndarray
    alpha: np.ndarray
    flow: np.ndarray | None = None
    timings: dict | None = None


DEFAULT_OPTIONS = RenderOptions()


def _validate_background(background):
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (3,):
        raise Splat4DError(f"background must be 3 values, got {bg.shape}")
    if bg.min() < 0.0 or bg.max() > 1.0:
        raise Splat4DError("background color must lie in [0, 1]")
    return bg


def _composite(geom: FrameGeometry, payload, background, opts: RenderOptions,
               timings=None):
    backend = get_backend(opts.backend)
    bins = None
    if backend.name == "compiled":
        t0 = perf_counter()
        bins = (*bin_splats(geom.boxes, geom.width, geom.height,
                            opts.tile_size), opts.tile_size)
        if timings is not None:
            timings["bin"] = timings.get("bin", 0.0) + perf_counter() - t0
    t0 = perf_counter()
    out, trans = backend.forward(
        geom.width, geom.height, geom.mean2d, geom.conic, geom.avals,
        payload, geom.boxes, background, opts.transmittance_floor,
        opts.weight_clamp, bins=bins, threads=opts.threads)
    if timings is not None:
        timings["blend"] = timings.get("blend", 0.0) + perf_counter() - t0
    return out, trans, backend, bins


def render_with_context(scene: Scene, cam: Camera, t: float, background,
                        opts: RenderOptions = DEFAULT_OPTIONS,
                        with_timings: bool = False):
    """Render and keep everything the backward pass needs.

    Returns (RenderOutput, ctx); pass ctx to render_backward.  The raw
    (pre-clip) composite stays in ctx; the output color is clipped.
    """
    bg = _validate_background(background)
    timings = {} if with_timings else None
    geom = prepare_frame(
        scene, cam, t,
        radius_sigma=opts.radius_sigma,
        marginal_threshold=opts.marginal_threshold,
        no_4drot=opts.no_4drot,
        timings=timings,
    )
    raw, trans, backend, bins = _composite(geom, geom.colors, bg, opts,
                                           timings)
    color = np.minimum(raw, 1.0)
    output = RenderOutput(color=color, alpha=1.0 - trans, timings=timings)
    ctx = {
        "geom": geom,
        "bins": bins,
        "raw": raw,
        "background": bg,
        "opts": opts,
        "backend": backend,
        "t": float(t),
    }
    return output, ctx


def render(scene: Scene, cam: Camera, t: float, background=(0.0, 0.0, 0.0),
           opts: RenderOptions = DEFAULT_OPTIONS,
           with_timings: bool = False) -> RenderOutput:
    output, _ = render_with_context(scene, cam, t, background, opts,
                                    with_timings)
    return output


def render_backward(scene: Scene, cam: Camera, ctx: dict, d_color):
    """Gradients of a scalar loss w.r.t. scene parameters.

    d_color is dL/d(output color), shape (H, W, 3).  Returns (grads, stats,
    info); grads keys match scene array names, stats feeds densification,
    info reports per-splat weight-clamp pixel counts ("clamped") whose
    gradient contribution is zero by construction.
    """
    geom: FrameGeometry = ctx["geom"]
    opts: RenderOptions = ctx["opts"]
    d_raw = np.where(ctx["raw"] > 1.0, 0.0, np.asarray(d_color, dtype=np.float64))
    d_raw = np.ascontiguousarray(d_raw)
    backend = ctx["backend"]
    d_mean2d, d_conic, d_avals, d_payload, clamp_counts = backend.backward(
        geom.width, geom.height, geom.mean2d, geom.conic, geom.avals,
        geom.colors, geom.boxes, ctx["background"],
        opts.transmittance_floor, opts.weight_clamp, d_raw, ctx["raw"],
        bins=ctx["bins"], threads=opts.threads)
    grads, stats = geometry_backward(scene, cam, geom, d_mean2d, d_conic,
                                     d_avals, d_payload)
    info = {"clamped": clamp_counts, "color_clipped": ctx["raw"] > 1.0}
    return grads, stats, info


def render_flow(scene: Scene, cam: Camera, t: float, dt: float,
                background=(0.0, 0.0, 0.0),
                opts: RenderOptions = DEFAULT_OPTIONS) -> RenderOutput:
    """Composite per-splat screen motion with the time-t weights.

    Each visible splat's flow vector is the screen displacement of its
    conditional mean from t to t + dt; compositing weights are exactly those
    of render at time t, so flow inherits occlusion from color.
    """
    if not dt > 0:
        raise Splat4DError(f"flow dt must be positive, got {dt}")
    bg = _validate_background(background)
    geom = prepare_frame(
        scene, cam, t,
        radius_sigma=opts.radius_sigma,
        marginal_threshold=opts.marginal_threshold,
        no_4drot=opts.no_4drot,
    )
    m = geom.n_visible
    if m == 0:
        flow = np.zeros((cam.height, cam.width, 2))
        color = np.broadcast_to(bg, (cam.height, cam.width, 3)).copy()
        return RenderOutput(color=color,
                            alpha=np.zeros((cam.height, cam.width)),
                            flow=flow)
    cache = geom.cache
    mean_now = cache["cond_mean"]
    if cache["no_4drot"]:
        mean_later = mean_now
    else:
        mean_later = mean_now + cache["gain"] * dt
    uv_now, _ = project_point(cam, mean_now)
    uv_later, _ = project_point(cam, mean_later)
    flow_vec = uv_later - uv_now
    payload = np.ascontiguousarray(
        np.concatenate([geom.colors, flow_vec], axis=-1)
    )
    bg5 = np.concatenate([bg, [0.0, 0.0]])
    out, trans, _, _ = _composite(geom, payload, bg5, opts)
    return RenderOutput(color=np.minimum(out[:, :, :3], 1.0),
                        alpha=1.0 - trans,
                        flow=out[:, :, 3:])


def cull(scene: Scene, cam: Camera, t: float,
         opts: RenderOptions = DEFAULT_OPTIONS):
    """Visible-splat list: (index, (conditional mean, conditional cov), marginal).

    Keeps a Gaussian iff its temporal marginal is >= the threshold, its
    conditional mean is in front of the near plane, and its screen bounding
    box intersects the image.  Ordered front to back.
    """
    geom = prepare_frame(
        scene, cam, t,
        radius_sigma=opts.radius_sigma,
        marginal_threshold=opts.marginal_threshold,
        no_4drot=opts.no_4drot,
    )
    out = []
    for k in range(geom.n_visible):
        out.append((
            int(geom.vis_idx[k]),
            (geom.cache["cond_mean"][k].copy(), geom.cache["cov3"][k].copy()),
            float(geom.cache["marginal"][k]),
        ))
    return out


def oracle_render(scene: Scene, cam: Camera, t: float,
                  background=(0.0, 0.0, 0.0),
                  marginal_threshold: float = 0.05,
                  weight_clamp: float = 0.99,
                  no_4drot: bool = False) -> RenderOutput:
    """Brute-force reference renderer for tests.

    Same math as render, but per-Gaussian with the plain module functions:
    full global sort, every surviving splat evaluated at every pixel, no
    box truncation, no transmittance cutoff.  Desk-scale scenes only.
    """
    bg = _validate_background(background)
    h, w = cam.height, cam.width
    ys, xs = np.mgrid[0:h, 0:w]
    px = np.stack([xs + 0.5, ys + 0.5], axis=-1).reshape(-1, 2)

    scales = activated_scales(scene)
    opac = activated_opacity(scene)
    entries = []
    for i in range(scene.n_gaussians):
        if no_4drot:
            r3 = rot3_from_quat(scene.rotors_left[i])
            m3 = r3 * scales[i, :3]
            cov4 = np.zeros((4, 4))
            cov4[:3, :3] = m3 @ m3.T
            cov4[3, 3] = scales[i, 3] ** 2
        else:
            cov4 = build_covariance(scales[i], scene.rotors_left[i],
                                    scene.rotors_right[i])
        mean4 = scene.means[i]
        c_tt = cov4[3, 3]
        dtv = t - mean4[3]
        marg = float(np.exp(-0.5 * dtv * dtv / c_tt))
        if marg < marginal_threshold:
            continue
        gain = cov4[:3, 3] / c_tt
        mean3 = mean4[:3] + gain * dtv
        cov3 = cov4[:3, :3] - np.outer(gain, cov4[:3, 3])
        cov3 = 0.5 * (cov3 + cov3.T)
        uv, depth = project_point(cam, mean3)
        if depth <= cam.near:
            continue
        cam_pt = cam.world_to_cam_points(mean3)
        cov2 = project_covariance(cam, cam_pt, cov3)
        vdir = mean3 - cam.center
        vdir = vdir / np.linalg.norm(vdir)
        color = eval_color(scene.sh[i], vdir, dtv, scene.sh_config)
        entries.append((float(depth), i, uv, np.linalg.inv(cov2), color,
                        marg * opac[i]))

    entries.sort(key=lambda e: (e[0], e[1]))
    trans = np.ones(h * w)
    out = np.zeros((h * w, 3))
    for _, _, uv, q, color, aval in entries:
        d = px - uv
        maha = (q[0, 0] * d[:, 0] ** 2 + 2.0 * q[0, 1] * d[:, 0] * d[:, 1]
                + q[1, 1] * d[:, 1] ** 2)
        wgt = np.minimum(aval * np.exp(-0.5 * maha), weight_clamp)
        out += (wgt * trans)[:, None] * color
        trans = trans * (1.0 - wgt)
    out += trans[:, None] * bg
    return RenderOutput(color=np.minimum(out, 1.0).reshape(h, w, 3),
                        alpha=(1.0 - trans).reshape(h, w))
