"""NumPy compositing kernels: the fallback when the extension is not built.

Instead of iterating tiles, these sweep splats front to back and update each
splat's pixel box with masked vectorized ops.  Per pixel this touches the
same splats in the same order under the same transmittance gate as the tiled
compiled kernel, so the two backends agree to floating-point noise; tiling
in the compiled path is purely a locality optimization.
"""

from __future__ import annotations

import numpy as np


def forward(width, height, mean2d, conic, avals, payload, boxes,
            background, t_floor, w_clamp, tile_starts=None, dup_ids=None,
            ntx=0, tile_size=16):
    """Front-to-back compositing; returns (out HxWxC, trans HxW).

    payload carries whatever per-splat vectors are being composited (RGB,
    flow, or both stacked); background must have the same channel count.
    The tile arguments are accepted for signature parity and ignored.
    """
    m = mean2d.shape[0]
    nc = payload.shape[1]
    out = np.zeros((height, width, nc))
    trans = np.ones((height, width))
    for i in range(m):
        x0, x1, y0, y1 = boxes[i]
        tb = trans[y0:y1, x0:x1]
        active = tb >= t_floor
        if not active.any():
            continue
        dx = np.arange(x0, x1) + 0.5 - mean2d[i, 0]
        dy = np.arange(y0, y1) + 0.5 - mean2d[i, 1]
        dxg, dyg = dx[None, :], dy[:, None]
        maha = (conic[i, 0] * dxg * dxg
                + 2.0 * conic[i, 1] * dxg * dyg
                + conic[i, 2] * dyg * dyg)
        g = np.exp(-0.5 * maha)
        w = np.minimum(avals[i] * g, w_clamp)
        w = np.where(active, w, 0.0)
        out[y0:y1, x0:x1] += (w * tb)[:, :, None] * payload[i]
        trans[y0:y1, x0:x1] = tb * (1.0 - w)
    out += trans[:, :, None] * background
    return out, trans


def backward(width, height, mean2d, conic, avals, payload, boxes,
             background, t_floor, w_clamp, d_out, total,
             tile_starts=None, dup_ids=None, ntx=0, tile_size=16):
    """Backward of forward w.r.t. per-splat inputs.

    d_out is dL/d(out); total is the forward output (with background).
    Returns (d_mean2d, d_conic, d_avals, d_payload, clamp_counts).  The
    derivative of a pixel's color w.r.t. splat i's weight is

        c_i T_i - (C - P_i) / (1 - w_i)

    where P_i is the prefix sum of contributions through splat i: the first
    term is the splat's own entry, the second rescales everything behind it.
    Clamped weights (a * G > w_clamp) propagate zero weight gradient; the
    clamp counts report how many pixels hit the clamp per splat.
    """
    m = mean2d.shape[0]
    nc = payload.shape[1]
    trans = np.ones((height, width))
    prefix = np.zeros((height, width, nc))
    d_mean2d = np.zeros((m, 2))
    d_conic = np.zeros((m, 3))
    d_avals = np.zeros(m)
    d_payload = np.zeros((m, nc))
    clamp_counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        x0, x1, y0, y1 = boxes[i]
        tb = trans[y0:y1, x0:x1]
        active = tb >= t_floor
        if not active.any():
            continue
        dx = np.arange(x0, x1) + 0.5 - mean2d[i, 0]
        dy = np.arange(y0, y1) + 0.5 - mean2d[i, 1]
        dxg, dyg = dx[None, :], dy[:, None]
        maha = (conic[i, 0] * dxg * dxg
                + 2.0 * conic[i, 1] * dxg * dyg
                + conic[i, 2] * dyg * dyg)
        g = np.exp(-0.5 * maha)
        w_raw = avals[i] * g
        clamped = w_raw > w_clamp
        w = np.where(active, np.minimum(w_raw, w_clamp), 0.0)
        wt = w * tb
        contrib = wt[:, :, None] * payload[i]
        pbox = prefix[y0:y1, x0:x1]
        pbox += contrib
        resid = total[y0:y1, x0:x1] - pbox
        dob = d_out[y0:y1, x0:x1]
        d_payload[i] = np.einsum("yxc,yx->c", dob, wt)
        # dL/dw per pixel, then through w = min(a * G, clamp).
        d_w = np.einsum("yxc,yxc->yx",
                        dob,
                        payload[i] * tb[:, :, None]
                        - resid / (1.0 - w)[:, :, None])
        eff = active & ~clamped
        d_w = np.where(eff, d_w, 0.0)
        d_avals[i] = np.sum(d_w * g)
        sfac = d_w * avals[i] * g
        d_mean2d[i, 0] = np.sum(sfac * (conic[i, 0] * dxg + conic[i, 1] * dyg))
        d_mean2d[i, 1] = np.sum(sfac * (conic[i, 1] * dxg + conic[i, 2] * dyg))
        d_conic[i, 0] = np.sum(sfac * (-0.5 * dxg * dxg))
        d_conic[i, 1] = np.sum(sfac * (-dxg * dyg))
        d_conic[i, 2] = np.sum(sfac * (-0.5 * dyg * dyg))
        clamp_counts[i] = int(np.sum(active & clamped))
        trans[y0:y1, x0:x1] = tb * (1.0 - w)
    return d_mean2d, d_conic, d_avals, d_payload, clamp_counts
