"""Pinhole cameras and the affine (EWA-style) covariance projection.

Conventions: world-to-camera maps world points into a right-handed frame
with +z forward; pixel (0, 0) is the top-left corner and pixel centers sit
at integer + 0.5 coordinates, so a point projecting to (0.5, 0.5) lands on
the center of the corner pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

# Screen-space dilation added to projected covariances (antialiasing floor).
DILATION_2D = 0.3

_Z_EPS = 1e-12


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray
    near: float = 0.01
    cam_id: str = ""
    _rotation: np.ndarray = field(init=False, repr=False)
    _center: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: focal lengths must be positive"
            )
        if self.width <= 0 or self.height <= 0:
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: image size must be positive"
            )
        if self.near <= 0:
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: near plane must be positive"
            )
        w2c = np.asarray(self.world_to_camera, dtype=np.float64)
        if w2c.shape != (4, 4):
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: world_to_camera must be 4x4"
            )
        rot = w2c[:3, :3]
        err = np.abs(rot @ rot.T - np.eye(3)).max()
        if err > 1e-6:
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: rotation block not orthonormal "
                f"(max deviation {err:.3g})"
            )
        bottom = w2c[3]
        if np.abs(bottom - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-9:
            raise ShapeMismatchError(
                f"camera {self.cam_id!r}: last row of world_to_camera must be "
                "[0, 0, 0, 1]"
            )
        object.__setattr__(self, "world_to_camera", w2c)
        object.__setattr__(self, "_rotation", rot.copy())
        object.__setattr__(self, "_center", -rot.T @ w2c[:3, 3])

    @property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation block W."""
        return self._rotation

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -W^T t."""
        return self._center

    def world_to_cam_points(self, pts):
        """Apply the rigid transform to (..., 3) world points."""
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self._rotation.T + self.world_to_camera[:3, 3]


def _safe_z(z):
    """Clamp |z| away from zero for divisions; sign preserved."""
    return np.where(np.abs(z) < _Z_EPS, np.where(z < 0, -_Z_EPS, _Z_EPS), z)


def project_point(cam: Camera, pts):
    """Project (..., 3) world points; returns (uv, depth).

    uv is in pixels, depth is the camera-frame z.  Points behind the near
    plane are still reported (with whatever uv the math gives); callers cull
    on depth rather than treating them as errors.
    """
    cpts = cam.world_to_cam_points(pts)
    z = _safe_z(cpts[..., 2])
    u = cam.fx * cpts[..., 0] / z + cam.cx
    v = cam.fy * cpts[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1), cpts[..., 2]


def projection_jacobian(cam: Camera, cam_pts):
    """Jacobian of (u, v) w.r.t. camera-frame position; (..., 2, 3)."""
    cam_pts = np.asarray(cam_pts, dtype=np.float64)
    x, y = cam_pts[..., 0], cam_pts[..., 1]
    z = _safe_z(cam_pts[..., 2])
    zero = np.zeros_like(x)
    row_u = np.stack([cam.fx / z, zero, -cam.fx * x / (z * z)], axis=-1)
    row_v = np.stack([zero, cam.fy / z, -cam.fy * y / (z * z)], axis=-1)
    return np.stack([row_u, row_v], axis=-2)


def project_covariance(cam: Camera, cam_pts, cov3_world):
    """Screen-space 2x2 covariance of a 3D Gaussian at camera points.

    Sigma_2d = J W Sigma_world W^T J^T + DILATION_2D * I, with J the local
    projection Jacobian and W the camera rotation.  The dilation keeps the
    matrix comfortably positive definite for sub-pixel splats.
    """
    j = projection_jacobian(cam, cam_pts)
    w = cam.rotation
    cov_cam = np.einsum("ij,...jk,lk->...il", w, np.asarray(cov3_world), w)
    cov2 = j @ cov_cam @ np.swapaxes(j, -1, -2)
    cov2 = cov2 + DILATION_2D * np.eye(2)
    return cov2
