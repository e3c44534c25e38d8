# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled compositing kernels.

Tiles are independent: forward_range / backward_range process tile ids in
[tile0, tile1) and touch only those pixels, so callers can fan tile chunks
out across threads (the loops release the GIL).  Per pixel the splat
sequence, the transmittance gate, and the clamp behavior mirror
kernels_py exactly; keep the two in lockstep when editing.

Payload channel count is capped at 8 (RGB + flow + slack).
"""

from libc.math cimport exp

import numpy as np

DEF MAX_CHANNELS = 8


def forward_range(int tile0, int tile1, int tile_size, int ntx,
                  int height, int width,
                  long long[::1] tile_starts, int[::1] dup_ids,
                  double[:, ::1] mean2d, double[:, ::1] conic,
                  double[::1] avals, double[:, ::1] payload,
                  int[:, ::1] boxes, double[::1] background,
                  double t_floor, double w_clamp,
                  double[:, :, ::1] out, double[:, ::1] trans):
    cdef int nc = payload.shape[1]
    if nc > MAX_CHANNELS:
        raise ValueError(f"payload has {nc} channels, max {MAX_CHANNELS}")
    cdef int tid, tx, ty, x_start, x_end, y_start, y_end, px, py, ch, i
    cdef long long si, s0, s1
    cdef double t, dx, dy, maha, g, w, wt
    cdef double c_acc[MAX_CHANNELS]
    with nogil:
        for tid in range(tile0, tile1):
            ty = tid / ntx
            tx = tid % ntx
            y_start = ty * tile_size
            y_end = min(y_start + tile_size, height)
            x_start = tx * tile_size
            x_end = min(x_start + tile_size, width)
            s0 = tile_starts[tid]
            s1 = tile_starts[tid + 1]
            for py in range(y_start, y_end):
                for px in range(x_start, x_end):
                    t = 1.0
                    for ch in range(nc):
                        c_acc[ch] = 0.0
                    for si in range(s0, s1):
                        if t < t_floor:
                            break
                        i = dup_ids[si]
                        if (px < boxes[i, 0] or px >= boxes[i, 1]
                                or py < boxes[i, 2] or py >= boxes[i, 3]):
                            continue
                        dx = px + 0.5 - mean2d[i, 0]
                        dy = py + 0.5 - mean2d[i, 1]
                        maha = (conic[i, 0] * dx * dx
                                + 2.0 * conic[i, 1] * dx * dy
                                + conic[i, 2] * dy * dy)
                        g = exp(-0.5 * maha)
                        w = avals[i] * g
                        if w > w_clamp:
                            w = w_clamp
                        wt = w * t
                        for ch in range(nc):
                            c_acc[ch] += wt * payload[i, ch]
                        t *= 1.0 - w
                    for ch in range(nc):
                        out[py, px, ch] = c_acc[ch] + t * background[ch]
                    trans[py, px] = t


def backward_range(int tile0, int tile1, int tile_size, int ntx,
                   int height, int width,
                   long long[::1] tile_starts, int[::1] dup_ids,
                   double[:, ::1] mean2d, double[:, ::1] conic,
                   double[::1] avals, double[:, ::1] payload,
                   int[:, ::1] boxes, double[::1] background,
                   double t_floor, double w_clamp,
                   double[:, :, ::1] d_out, double[:, :, ::1] total,
                   double[:, ::1] d_mean2d, double[:, ::1] d_conic,
                   double[::1] d_avals, double[:, ::1] d_payload,
                   long long[::1] clamp_counts):
    cdef int nc = payload.shape[1]
    if nc > MAX_CHANNELS:
        raise ValueError(f"payload has {nc} channels, max {MAX_CHANNELS}")
    cdef int tid, tx, ty, x_start, x_end, y_start, y_end, px, py, ch, i
    cdef long long si, s0, s1
    cdef double t, dx, dy, maha, g, w_raw, w, wt, gw, sf, resid, dob, contrib
    cdef bint clamped
    cdef double pref[MAX_CHANNELS]
    with nogil:
        for tid in range(tile0, tile1):
            ty = tid / ntx
            tx = tid % ntx
            y_start = ty * tile_size
            y_end = min(y_start + tile_size, height)
            x_start = tx * tile_size
            x_end = min(x_start + tile_size, width)
            s0 = tile_starts[tid]
            s1 = tile_starts[tid + 1]
            for py in range(y_start, y_end):
                for px in range(x_start, x_end):
                    t = 1.0
                    for ch in range(nc):
                        pref[ch] = 0.0
                    for si in range(s0, s1):
                        if t < t_floor:
                            break
                        i = dup_ids[si]
                        if (px < boxes[i, 0] or px >= boxes[i, 1]
                                or py < boxes[i, 2] or py >= boxes[i, 3]):
                            continue
                        dx = px + 0.5 - mean2d[i, 0]
                        dy = py + 0.5 - mean2d[i, 1]
                        maha = (conic[i, 0] * dx * dx
                                + 2.0 * conic[i, 1] * dx * dy
                                + conic[i, 2] * dy * dy)
                        g = exp(-0.5 * maha)
                        w_raw = avals[i] * g
                        clamped = w_raw > w_clamp
                        w = w_clamp if clamped else w_raw
                        wt = w * t
                        gw = 0.0
                        for ch in range(nc):
                            contrib = wt * payload[i, ch]
                            pref[ch] += contrib
                            resid = total[py, px, ch] - pref[ch]
                            dob = d_out[py, px, ch]
                            d_payload[i, ch] += dob * wt
                            gw += dob * (payload[i, ch] * t
                                         - resid / (1.0 - w))
                        if clamped:
                            clamp_counts[i] += 1
                        else:
                            d_avals[i] += gw * g
                            sf = gw * avals[i] * g
                            d_mean2d[i, 0] += sf * (conic[i, 0] * dx
                                                    + conic[i, 1] * dy)
                            d_mean2d[i, 1] += sf * (conic[i, 1] * dx
                                                    + conic[i, 2] * dy)
                            d_conic[i, 0] += sf * (-0.5 * dx * dx)
                            d_conic[i, 1] += sf * (-dx * dy)
                            d_conic[i, 2] += sf * (-0.5 * dy * dy)
                        t *= 1.0 - w
