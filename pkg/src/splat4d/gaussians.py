"""4D Gaussian geometry: rotor-pair rotations, covariance assembly, time slicing.

A 4D rotation is parameterized by two unit quaternions (q_left, q_right)
acting as R = L(q_left) @ R(q_right), where L and R are the left- and
right-isoclinic matrices of the quaternions.  Every SO(4) element factors
this way (up to a joint sign flip).  Covariances are R diag(s^2) R^T.

Slicing a 4D Gaussian at a fixed time t gives a 3D Gaussian with the usual
Gaussian conditioning formulas, plus an unnormalized temporal marginal
exp(-(t - mu_t)^2 / (2 sigma_t^2)) whose peak is 1 regardless of extent;
rendering treats that marginal as a visibility factor.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateCovarianceError,
    DegenerateRotorError,
    DegenerateTimeExtentError,
)

QUAT_NORM_FLOOR = 1e-12
TIME_VAR_FLOOR = 1e-14


def normalize_quaternion(q, floor: float = QUAT_NORM_FLOOR):
    """Return (unit quaternion, norm); raises on norms below the floor."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm < floor):
        raise DegenerateRotorError(
            f"quaternion norm below {floor:g} (min {norm.min():g})"
        )
    return q / norm[..., None], norm


def left_isoclinic(q):
    """Matrix of left quaternion multiplication x -> q * x; (..., 4, 4)."""
    a, b, c, d = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    rows = [
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def right_isoclinic(q):
    """Matrix of right quaternion multiplication x -> x * q; (..., 4, 4)."""
    p, q_, r, s = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    rows = [
        [p, -q_, -r, -s],
        [q_, p, s, -r],
        [r, -s, p, q_],
        [s, r, -q_, p],
    ]
    return np.stack([np.stack(rw, axis=-1) for rw in rows], axis=-2)


# Constant basis stacks: L(e_k), R(e_k) for the four unit quaternions.  The
# isoclinic maps are linear in q, so L(q) = sum_k q_k * LEFT_BASIS[k], which
# the backward pass uses to pull matrix gradients onto quaternion components.
LEFT_BASIS = left_isoclinic(np.eye(4))
RIGHT_BASIS = right_isoclinic(np.eye(4))


def rotor_to_matrix(q_left, q_right):
    """SO(4) rotation from an (unnormalized) quaternion pair; (..., 4, 4).

    Both quaternions are normalized internally; (q_l, q_r) and (-q_l, -q_r)
    map to the same rotation.
    """
    ql, _ = normalize_quaternion(q_left)
    qr, _ = normalize_quaternion(q_right)
    return left_isoclinic(ql) @ right_isoclinic(qr)


def matrix_to_rotor(rot):
    """Recover a quaternion pair from an SO(4) matrix.

    Inverse of rotor_to_matrix up to the joint sign flip.  Uses the identity
    <L(e_i) R(e_j), L(e_k) R(e_m)>_F = 4 delta_ik delta_jm: projecting the
    rotation onto that basis yields the rank-1 outer product q_l q_r^T,
    which a leading singular pair factorizes.
    """
    rot = np.asarray(rot, dtype=np.float64)
    if rot.shape[-2:] != (4, 4):
        raise DegenerateRotorError(f"expected (..., 4, 4) matrix, got {rot.shape}")
    b = 0.25 * np.einsum("...ij,kil,mjl->...km", rot, LEFT_BASIS,
                         np.swapaxes(RIGHT_BASIS, -1, -2))
    u, s, vt = np.linalg.svd(b)
    ql = u[..., :, 0] * np.sqrt(s[..., 0, None])
    qr = vt[..., 0, :] * np.sqrt(s[..., 0, None])
    ql, _ = normalize_quaternion(ql)
    qr, _ = normalize_quaternion(qr)
    return ql, qr


def rot3_from_quat(q):
    """3D rotation matrix from an (unnormalized) quaternion (w, x, y, z)."""
    qn, _ = normalize_quaternion(q)
    w, x, y, z = np.moveaxis(qn, -1, 0)
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def covariance_factor(scales, q_left, q_right):
    """Return (R, M) with M = R diag(scales) so that Sigma = M M^T."""
    rot = rotor_to_matrix(q_left, q_right)
    scales = np.asarray(scales, dtype=np.float64)
    return rot, rot * scales[..., None, :]


def build_covariance(scales, q_left, q_right):
    """Sigma = R diag(s^2) R^T for per-axis standard deviations s; (..., 4, 4)."""
    _, m = covariance_factor(scales, q_left, q_right)
    return m @ np.swapaxes(m, -1, -2)


def condition_at_time(mean4, cov4, t):
    """Slice a 4D Gaussian at time t: 3D conditional mean and covariance.

    mean_xyz|t = mean_xyz + cov_xt / cov_tt * (t - mean_t)
    cov_xyz|t  = cov_xyz - cov_xt cov_xt^T / cov_tt

    Broadcasts over leading axes.  Raises when the temporal variance sits
    below the representable floor.
    """
    mean4 = np.asarray(mean4, dtype=np.float64)
    cov4 = np.asarray(cov4, dtype=np.float64)
    c_tt = cov4[..., 3, 3]
    if np.any(c_tt < TIME_VAR_FLOOR):
        raise DegenerateTimeExtentError(
            f"temporal variance below {TIME_VAR_FLOOR:g}"
        )
    b = cov4[..., :3, 3]
    gain = b / c_tt[..., None]
    mean3 = mean4[..., :3] + gain * (np.asarray(t) - mean4[..., 3])[..., None]
    cov3 = cov4[..., :3, :3] - gain[..., :, None] * b[..., None, :]
    cov3 = 0.5 * (cov3 + np.swapaxes(cov3, -1, -2))
    return mean3, cov3


def marginal_at_time(mean4, cov4, t):
    """Unnormalized temporal visibility in (0, 1]; peak 1 at t = mean_t."""
    mean4 = np.asarray(mean4, dtype=np.float64)
    cov4 = np.asarray(cov4, dtype=np.float64)
    c_tt = cov4[..., 3, 3]
    if np.any(c_tt < TIME_VAR_FLOOR):
        raise DegenerateTimeExtentError(
            f"temporal variance below {TIME_VAR_FLOOR:g}"
        )
    dt = np.asarray(t) - mean4[..., 3]
    return np.exp(-0.5 * dt * dt / c_tt)


def eval_density(x, mean, cov):
    """Unnormalized Gaussian density exp(-0.5 d^T Sigma^-1 d) at points x.

    Works for any dimension; x broadcasts against mean.  Raises a degenerate
    covariance error when Sigma has no Cholesky factor (singular or not
    positive definite).
    """
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError(f"covariance not SPD: {exc}") from exc
    d = x - mean
    # Solve L y = d per point; quadratic form is |y|^2.
    y = np.linalg.solve(chol, d[..., None])[..., 0]
    return np.exp(-0.5 * np.sum(y * y, axis=-1))
