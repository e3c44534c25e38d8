"""Finite-difference validation of the analytic rendering backward pass."""

import numpy as np
import pytest

from splat4d.cameras import Camera
from splat4d.harmonics import dc_from_rgb
from splat4d.raster import (
    RenderOptions,
    render,
    render_backward,
    render_with_context,
)
from splat4d.raster.backend import compiled_available
from splat4d.scene import Scene, ShConfig, logit
from util import blob_scene, random_scene, ring_camera

BG = (0.15, 0.25, 0.35)

# The analytic gradient treats each splat's pixel box as fixed, so box
# rounding introduces O(exp(-0.5 r^2)) jumps when a perturbation moves an
# edge by one pixel.  A wide radius pushes those jumps far below the
# finite-difference resolution without touching the differentiable math.
GRADCHECK_OPTS = RenderOptions(radius_sigma=7.0)

PARAM_ARRAYS = ("means", "log_scales", "rotors_left", "rotors_right",
                "opacity_logits", "sh")


def small_camera(width=32, height=32, fx=40.0):
    return Camera(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                  width=width, height=height, world_to_camera=np.eye(4),
                  near=0.01)


def gradcheck_scene(rng, n=8):
    """A scene that keeps every pixel away from non-smooth boundaries.

    Opacities stay below the weight clamp, marginals stay far above the
    cull threshold, colors stay inside (0, 1) so neither the color floor
    nor the output clip engages, and depths are well separated so the
    front-to-back order cannot flip under finite-difference perturbations.
    """
    cfg = ShConfig(l_max=2, n_max=1)
    means = np.zeros((n, 4))
    means[:, 2] = 1.2 + 0.3 * np.arange(n)
    means[:, 0] = rng.uniform(-0.25, 0.25, n) * means[:, 2]
    means[:, 1] = rng.uniform(-0.25, 0.25, n) * means[:, 2]
    means[:, 3] = 0.5 + rng.choice([-1.0, 1.0], n) * rng.uniform(0.1, 0.25, n)
    log_scales = np.zeros((n, 4))
    log_scales[:, :3] = np.log(rng.uniform(0.08, 0.15, (n, 3)))
    log_scales[:, 3] = np.log(rng.uniform(0.7, 1.0, n))
    # Near-identity rotors: genuine space-time coupling but a temporal
    # variance that stays close to its scale, keeping marginals near 1.
    rl = np.concatenate([np.ones((n, 1)), rng.normal(0, 0.1, (n, 3))], axis=1)
    rr = np.concatenate([np.ones((n, 1)), rng.normal(0, 0.1, (n, 3))], axis=1)
    opac = logit(rng.uniform(0.3, 0.6, n))
    sh = rng.normal(0.0, 0.03, (n, 3, cfg.n_basis))
    sh[:, :, 0] = dc_from_rgb(rng.uniform(0.35, 0.65, (n, 3)))
    return Scene(means, log_scales, rl, rr, opac, sh, duration=1.0,
                 sh_config=cfg)


def weighted_loss(scene, cam, t, weights, opts):
    out = render(scene, cam, t, background=BG, opts=opts)
    return float(np.sum(out.color * weights))


def analytic_grads(scene, cam, t, weights, opts):
    _, ctx = render_with_context(scene, cam, t, BG, opts)
    return render_backward(scene, cam, ctx, weights)


def fd_grad_entry(scene, cam, t, weights, opts, name, index, h=1e-5):
    plus = scene.copy()
    getattr(plus, name)[index] += h
    minus = scene.copy()
    getattr(minus, name)[index] -= h
    return (weighted_loss(plus, cam, t, weights, opts)
            - weighted_loss(minus, cam, t, weights, opts)) / (2.0 * h)


def check_array(scene, cam, t, weights, opts, name, analytic,
                rel=1e-3, floor=1e-5):
    arr = getattr(scene, name)
    fd = np.zeros_like(analytic)
    for index in np.ndindex(arr.shape):
        fd[index] = fd_grad_entry(scene, cam, t, weights, opts, name, index)
    err = np.abs(analytic - fd)
    tol = rel * np.maximum(np.abs(analytic), np.abs(fd)) + floor
    worst = (err / tol).max()
    assert worst <= 1.0, (
        f"{name}: worst error ratio {worst:.2f}, "
        f"max abs err {err.max():.3e}")
    denom = np.linalg.norm(analytic) + np.linalg.norm(fd)
    if denom > 1e-8:
        assert np.linalg.norm(analytic - fd) / denom < rel


class TestGradcheck:
    def test_full_model(self):
        rng = np.random.default_rng(101)
        scene = gradcheck_scene(rng)
        cam = small_camera()
        t = 0.5
        weights = rng.normal(size=(32, 32, 3))
        grads, _, info = analytic_grads(scene, cam, t, weights,
                                        GRADCHECK_OPTS)
        assert int(info["clamped"].sum()) == 0
        assert not info["color_clipped"].any()
        for name in PARAM_ARRAYS:
            check_array(scene, cam, t, weights, GRADCHECK_OPTS, name,
                        grads[name])

    def test_no_4drot_branch(self):
        rng = np.random.default_rng(102)
        scene = gradcheck_scene(rng, n=5)
        cam = small_camera()
        opts = RenderOptions(radius_sigma=7.0, no_4drot=True)
        weights = rng.normal(size=(32, 32, 3))
        grads, _, _ = analytic_grads(scene, cam, 0.5, weights, opts)
        assert np.all(grads["rotors_right"] == 0.0)
        for name in ("means", "log_scales", "rotors_left",
                     "opacity_logits", "sh"):
            check_array(scene, cam, 0.5, weights, opts, name, grads[name])

    def test_second_viewpoint(self):
        # Off-axis extrinsics exercise the world-to-camera rotation chain.
        rng = np.random.default_rng(103)
        scene = random_scene(rng, 6, sh_config=ShConfig(l_max=1, n_max=1),
                             spread=0.4, scale_range=(0.1, 0.2),
                             t_scale_range=(1.0, 2.0),
                             opacity_range=(0.3, 0.6), sh_std=0.03)
        scene.means[:, 3] = 0.5 + rng.uniform(-0.2, 0.2, 6)
        scene.sh[:, :, 0] = dc_from_rgb(rng.uniform(0.35, 0.65, (6, 3)))
        scene.quantize_f32()
        cam = ring_camera(3, 8, width=32, hpix=32)
        weights = rng.normal(size=(32, 32, 3))
        grads, _, info = analytic_grads(scene, cam, 0.5, weights,
                                        GRADCHECK_OPTS)
        assert int(info["clamped"].sum()) == 0
        for name in PARAM_ARRAYS:
            check_array(scene, cam, 0.5, weights, GRADCHECK_OPTS, name,
                        grads[name])


class TestBackwardProperties:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(111)
        scene = gradcheck_scene(rng)
        cam = small_camera()
        grads, _, _ = analytic_grads(scene, cam, 0.5,
                                     np.zeros((32, 32, 3)), GRADCHECK_OPTS)
        for name in PARAM_ARRAYS:
            assert np.all(grads[name] == 0.0), name

    @pytest.mark.skipif(not compiled_available(),
                        reason="compiled kernels not built")
    def test_backend_parity(self):
        rng = np.random.default_rng(112)
        scene = random_scene(rng, 60)
        cam = ring_camera(2, 8, width=48, hpix=48)
        weights = rng.normal(size=(48, 48, 3))
        out = {}
        for backend in ("python", "compiled"):
            opts = RenderOptions(backend=backend)
            out[backend], _, _ = analytic_grads(scene, cam, 0.4, weights,
                                                opts)
        for name in PARAM_ARRAYS:
            a, b = out["python"][name], out["compiled"][name]
            scale = np.abs(a).max() + 1e-12
            assert np.abs(a - b).max() < 1e-9 * scale, name

    def test_opacity_gradient_closed_form(self):
        # Single centered splat: out = w c + (1 - w) bg with w = sigmoid(o),
        # so d out / d o = a (1 - a) (c - bg) at the center pixel.
        cam = small_camera()
        color = np.array([0.9, 0.2, 0.1])
        scene = blob_scene([[0.0125, 0.0125, 1.0]], [color], [0.1], [0.7])
        weights = np.zeros((32, 32, 3))
        weights[16, 16, 0] = 1.0
        grads, _, _ = analytic_grads(scene, cam, 0.0, weights,
                                     RenderOptions())
        a = 0.7
        want = a * (1 - a) * (color[0] - BG[0])
        assert grads["opacity_logits"][0] == pytest.approx(want, rel=1e-5)

    def test_clamped_weights_drop_from_gradient(self):
        # A near-opaque splat clamps at its core; weight-path gradients
        # (opacity, geometry) vanish there but color gradients survive.
        cam = small_camera()
        scene = blob_scene([[0.0125, 0.0125, 1.0]], [[0.9, 0.2, 0.1]],
                           [0.1], [0.5])
        scene.opacity_logits[0] = 40.0
        weights = np.ones((32, 32, 3))
        grads, _, info = analytic_grads(scene, cam, 0.0, weights,
                                        RenderOptions())
        assert int(info["clamped"][0]) > 0
        assert np.isfinite(grads["means"]).all()
        assert np.abs(grads["sh"][0]).max() > 0.0

    def test_clipped_color_blocks_gradient(self):
        # Red DC pushed past 1: wherever the red channel clips, upstream
        # red gradient is discarded, and finite differences agree because
        # the loss itself is flat there.
        rng = np.random.default_rng(113)
        cam = small_camera()
        scene = blob_scene([[0.0125, 0.0125, 1.0]], [[0.5, 0.5, 0.5]],
                           [0.12], [0.9])
        scene.sh[0, 0, 0] = dc_from_rgb(np.array([1.5]))[0]
        weights = rng.normal(size=(32, 32, 3))
        grads, _, info = analytic_grads(scene, cam, 0.0, weights,
                                        GRADCHECK_OPTS)
        clipped = info["color_clipped"]
        assert clipped[:, :, 0].any()
        assert not clipped[:, :, 1].any()
        for name in ("sh", "opacity_logits"):
            check_array(scene, cam, 0.0, weights, GRADCHECK_OPTS, name,
                        grads[name])

    def test_stats_shapes_and_ranges(self):
        rng = np.random.default_rng(114)
        scene = gradcheck_scene(rng)
        cam = small_camera()
        weights = rng.normal(size=(32, 32, 3))
        _, stats, _ = analytic_grads(scene, cam, 0.5, weights,
                                     RenderOptions())
        m = len(stats["vis_idx"])
        assert m > 0
        assert stats["gnorm2d"].shape == (m,)
        assert stats["gmu_t"].shape == (m,)
        assert stats["grad_mean4"].shape == (m, 4)
        assert stats["radius_frac"].shape == (m,)
        assert (stats["gnorm2d"] >= 0).all()
        assert (stats["gmu_t"] >= 0).all()
        assert (stats["radius_frac"] > 0).all()
        assert np.isfinite(stats["grad_mean4"]).all()
