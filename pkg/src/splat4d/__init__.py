"""4D Gaussian splatting for dynamic scenes.

Scenes are clouds of anisotropic 4D (space-time) Gaussians with rotor-pair
rotations and view/time-dependent color.  The package optimizes them against
posed, timestamped images and renders novel views at arbitrary times,
including scene flow, through a tile-based software rasterizer with an
analytic backward pass.
"""

from .cameras import Camera, project_covariance, project_point
from .errors import (
    CheckpointError,
    DatasetError,
    DegenerateCovarianceError,
    DegenerateRotorError,
    DegenerateTimeExtentError,
    SchemaError,
    ShapeMismatchError,
    Splat4DError,
)
from .gaussians import (
    build_covariance,
    condition_at_time,
    eval_density,
    marginal_at_time,
    matrix_to_rotor,
    rotor_to_matrix,
)
from .harmonics import eval_color, sh_basis
from .scene import Scene, ShConfig

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "Scene",
    "ShConfig",
    "Splat4DError",
    "CheckpointError",
    "DatasetError",
    "DegenerateCovarianceError",
    "DegenerateRotorError",
    "DegenerateTimeExtentError",
    "SchemaError",
    "ShapeMismatchError",
    "build_covariance",
    "condition_at_time",
    "eval_color",
    "eval_density",
    "marginal_at_time",
    "matrix_to_rotor",
    "project_covariance",
    "project_point",
    "rotor_to_matrix",
    "sh_basis",
    "__version__",
]
