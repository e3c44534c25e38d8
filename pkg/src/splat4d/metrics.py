"""Image metrics: PSNR, single-scale SSIM (with analytic gradient), flow error.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
dynamic range 1.0, channel-averaged, mean over valid window positions only.
The gradient is the exact derivative of that mean w.r.t. the first image;
it feeds the training loss, so it is validated against finite differences
in the test suite rather than trusted on faith.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .errors import ShapeMismatchError

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)

_WINDOW = _gaussian_window()


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr: shapes {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse <= 0.0:
        return PSNR_CAP
    return float(min(-10.0 * np.log10(mse / (peak * peak)), PSNR_CAP))


def _as_channels(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img
    raise ShapeMismatchError(f"ssim: expected HxW or HxWx{{1,3}}, got {img.shape}")


def _ssim_channel_stats(x, y):
    w = _WINDOW
    mx = convolve2d(x, w, mode="valid")
    my = convolve2d(y, w, mode="valid")
    sxx = convolve2d(x * x, w, mode="valid") - mx * mx
    syy = convolve2d(y * y, w, mode="valid") - my * my
    sxy = convolve2d(x * y, w, mode="valid") - mx * my
    a1 = 2.0 * mx * my + SSIM_C1
    a2 = 2.0 * sxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    return mx, my, a1, a2, b1, b2


def ssim(a, b) -> float:
    """Mean SSIM over valid window positions, channel-averaged."""
    a = _as_channels(a)
    b = _as_channels(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim: shapes {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"ssim: image {a.shape[:2]} smaller than the {SSIM_WINDOW}x"
            f"{SSIM_WINDOW} window"
        )
    total = 0.0
    for c in range(a.shape[2]):
        _, _, a1, a2, b1, b2 = _ssim_channel_stats(a[:, :, c], b[:, :, c])
        total += np.mean(a1 * a2 / (b1 * b2))
    return float(total / a.shape[2])


def dssim(a, b) -> float:
    return (1.0 - ssim(a, b)) / 2.0


def ssim_with_grad(a, b):
    """Return (ssim value, d ssim / d a) with a the first image.

    Derivation: per valid window p the SSIM map S(p) depends on a through
    mu_x, sigma_x^2 and sigma_xy; collecting terms, dS(p)/da_q factors as
    w_pq * (F0 + Fx * (a_q - mu_x) + Fy * (b_q - mu_y)), so the pixel
    gradient is three full-mode convolutions of window-space fields.
    """
    a = _as_channels(a)
    b = _as_channels(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim: shapes {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"ssim: image {a.shape[:2]} smaller than the {SSIM_WINDOW}x"
            f"{SSIM_WINDOW} window"
        )
    w = _WINDOW
    nc = a.shape[2]
    grad = np.zeros_like(a)
    total = 0.0
    for c in range(nc):
        x, y = a[:, :, c], b[:, :, c]
        mx, my, a1, a2, b1, b2 = _ssim_channel_stats(x, y)
        s = a1 * a2 / (b1 * b2)
        total += np.mean(s)
        n_win = s.size
        f0 = 2.0 * my * a2 / (b1 * b2) - 2.0 * mx * s / b1
        fx = -2.0 * s / b2
        fy = 2.0 * a1 / (b1 * b2)
        base = convolve2d(f0 - fx * mx - fy * my, w, mode="full")
        gx = convolve2d(fx, w, mode="full")
        gy = convolve2d(fy, w, mode="full")
        grad[:, :, c] = (base + x * gx + y * gy) / (n_win * nc)
    return float(total / nc), grad


def eval_flow(rendered_flow, gt_flow, coverage_mask):
    """Mean endpoint error (pixels) and angular accuracy over a mask.

    Angular accuracy is the fraction of masked pixels whose 2D flow vectors
    agree within 30 degrees.  Pixels where both flows are (near) zero count
    as accurate; a zero flow against a nonzero one does not.
    """
    est = np.asarray(rendered_flow, dtype=np.float64)
    gt = np.asarray(gt_flow, dtype=np.float64)
    mask = np.asarray(coverage_mask, dtype=bool)
    if est.shape != gt.shape or est.shape[-1] != 2:
        raise ShapeMismatchError(
            f"eval_flow: flow shapes {est.shape} vs {gt.shape}"
        )
    if mask.shape != est.shape[:-1]:
        raise ShapeMismatchError(
            f"eval_flow: mask shape {mask.shape} vs flow {est.shape[:-1]}"
        )
    if not mask.any():
        return 0.0, 1.0
    e = est[mask]
    g = gt[mask]
    epe = float(np.mean(np.linalg.norm(e - g, axis=-1)))
    ne = np.linalg.norm(e, axis=-1)
    ng = np.linalg.norm(g, axis=-1)
    tiny = 1e-12
    both_zero = (ne < tiny) & (ng < tiny)
    one_zero = ((ne < tiny) | (ng < tiny)) & ~both_zero
    ok = np.maximum(ne, tiny) * np.maximum(ng, tiny)
    cosang = np.clip(np.sum(e * g, axis=-1) / ok, -1.0, 1.0)
    ang = np.degrees(np.arccos(cosang))
    accurate = (ang < 30.0) & ~one_zero
    accurate |= both_zero
    return epe, float(np.mean(accurate))
