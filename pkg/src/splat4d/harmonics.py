"""View- and time-dependent color basis.

The basis is a product of real spherical harmonics in the view direction
(graphics sign convention, degrees 0..3) and a cosine Fourier series in the
time offset from a Gaussian's temporal center:

    B[n, k](dir, dt) = cos(2 pi n dt / period) * Y_k(dir)

Cosine-only keeps the basis even around a Gaussian's own timeline center.
Color is a per-channel dot product with the coefficients plus a 0.5 offset,
clamped below at zero.  Flat index b = n * (l_max+1)^2 + k.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ShapeMismatchError, Splat4DError
from .scene import ShConfig

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.4453057213202769,
    -0.5900435899266435,
)


def sh_functions(dirs, l_max: int):
    """Real spherical harmonics Y_k for unit directions; (..., (l_max+1)^2)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = np.moveaxis(dirs, -1, 0)
    one = np.ones_like(x)
    ys = [SH_C0 * one]
    if l_max >= 1:
        ys += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if l_max >= 2:
        xx, yy, zz = x * x, y * y, z * z
        ys += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]
    if l_max >= 3:
        ys += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(ys, axis=-1)


def sh_function_grads(dirs, l_max: int):
    """Derivatives dY_k/d(dir); (..., (l_max+1)^2, 3).

    Derivatives are with respect to the raw components, before any
    projection onto the unit sphere; callers composing with a normalized
    direction apply (I - dir dir^T) / r themselves.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = np.moveaxis(dirs, -1, 0)
    zero = np.zeros_like(x)
    one = np.ones_like(x)

    def g(gx, gy, gz):
        return np.stack([gx, gy, gz], axis=-1)

    grads = [g(zero, zero, zero)]
    if l_max >= 1:
        grads += [
            g(zero, -SH_C1 * one, zero),
            g(zero, zero, SH_C1 * one),
            g(-SH_C1 * one, zero, zero),
        ]
    if l_max >= 2:
        grads += [
            g(SH_C2[0] * y, SH_C2[0] * x, zero),
            g(zero, SH_C2[1] * z, SH_C2[1] * y),
            g(-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z),
            g(SH_C2[3] * z, zero, SH_C2[3] * x),
            g(2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, zero),
        ]
    if l_max >= 3:
        xx, yy, zz = x * x, y * y, z * z
        grads += [
            g(6.0 * SH_C3[0] * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), zero),
            g(SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y),
            g(-2.0 * SH_C3[2] * x * y,
              SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
              8.0 * SH_C3[2] * y * z),
            g(-6.0 * SH_C3[3] * x * z,
              -6.0 * SH_C3[3] * y * z,
              SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)),
            g(SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
              -2.0 * SH_C3[4] * x * y,
              8.0 * SH_C3[4] * x * z),
            g(2.0 * SH_C3[5] * x * z, -2.0 * SH_C3[5] * y * z,
              SH_C3[5] * (xx - yy)),
            g(SH_C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * SH_C3[6] * x * y, zero),
        ]
    return np.stack(grads, axis=-2)


def sh_basis(dirs, t_rel, cfg: ShConfig):
    """Full basis B[n, k] flattened to (..., cfg.n_basis)."""
    ys = sh_functions(dirs, cfg.l_max)
    t_rel = np.asarray(t_rel, dtype=np.float64)
    n = np.arange(cfg.n_max + 1, dtype=np.float64)
    phase = (2.0 * np.pi / cfg.period) * n * t_rel[..., None]
    cosf = np.cos(phase)
    out = cosf[..., :, None] * ys[..., None, :]
    return out.reshape(out.shape[:-2] + (cfg.n_basis,))


def sh_basis_with_grads(dirs, t_rel, cfg: ShConfig):
    """Basis plus its derivatives: (basis, dbasis_ddir, dbasis_dtrel).

    Shapes (..., B), (..., B, 3), (..., B).  The direction derivative is
    unprojected, as in sh_function_grads.
    """
    ys = sh_functions(dirs, cfg.l_max)
    dys = sh_function_grads(dirs, cfg.l_max)
    t_rel = np.asarray(t_rel, dtype=np.float64)
    n = np.arange(cfg.n_max + 1, dtype=np.float64)
    omega = (2.0 * np.pi / cfg.period) * n
    phase = omega * t_rel[..., None]
    cosf = np.cos(phase)
    dcosf = -np.sin(phase) * omega

    basis = cosf[..., :, None] * ys[..., None, :]
    dbasis_ddir = cosf[..., :, None, None] * dys[..., None, :, :]
    dbasis_dt = dcosf[..., :, None] * ys[..., None, :]
    lead = basis.shape[:-2]
    return (
        basis.reshape(lead + (cfg.n_basis,)),
        dbasis_ddir.reshape(lead + (cfg.n_basis, 3)),
        dbasis_dt.reshape(lead + (cfg.n_basis,)),
    )


def _checked_dirs(dirs):
    """Normalize directions, warning when they are not unit length."""
    dirs = np.asarray(dirs, dtype=np.float64)
    norms = np.linalg.norm(dirs, axis=-1)
    if np.any(norms < 1e-12):
        raise Splat4DError("zero-length view direction")
    if np.any(np.abs(norms - 1.0) > 1e-6):
        warnings.warn("view direction not unit length; normalizing",
                      RuntimeWarning, stacklevel=3)
        dirs = dirs / norms[..., None]
    return dirs


def eval_basis(cfg: ShConfig, dirs, t_rel):
    """Public basis evaluation: checks/normalizes dirs, then sh_basis."""
    return sh_basis(_checked_dirs(dirs), t_rel, cfg)


def eval_color(coeffs, dirs, t_rel, cfg: ShConfig):
    """Clamped color: max(coeffs . basis + 0.5, 0); (..., 3)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != cfg.n_basis or coeffs.shape[-2] != 3:
        raise ShapeMismatchError(
            f"coeffs shape {coeffs.shape} does not match 3x{cfg.n_basis} basis"
        )
    basis = eval_basis(cfg, dirs, t_rel)
    raw = np.einsum("...cb,...b->...c", coeffs, basis) + 0.5
    return np.maximum(raw, 0.0)


def dc_from_rgb(rgb):
    """DC coefficient reproducing a constant color under the 0.5 offset."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0
