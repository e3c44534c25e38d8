"""Scene container: a struct-of-arrays bag of 4D Gaussians.

Parameters are stored unconstrained (log scales, opacity logits, raw
quaternion pairs) so optimizers can take free steps; activations are applied
where the values are consumed.  Arrays are float64 in memory but are kept
float32-representable at all times (initializers and the training step both
quantize through float32) so checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatchError

# Sigmoid/exp activation floors; keep covariance assembly away from exact zero.
MIN_SCALE = 1e-7


@dataclass(frozen=True)
class ShConfig:
    """Degrees of the color basis: spherical degree l_max, temporal order n_max.

    The basis has (n_max+1) * (l_max+1)**2 functions per channel; period is
    the temporal length the cosine factors wrap around (the scene duration).
    """

    l_max: int = 2
    n_max: int = 1
    period: float = 1.0

    def __post_init__(self):
        if not (0 <= self.l_max <= 3):
            raise ShapeMismatchError(f"l_max must be in [0, 3], got {self.l_max}")
        if not (0 <= self.n_max <= 4):
            raise ShapeMismatchError(f"n_max must be in [0, 4], got {self.n_max}")
        if not (self.period > 0):
            raise ShapeMismatchError(f"period must be positive, got {self.period}")

    @property
    def n_basis(self) -> int:
        return (self.n_max + 1) * (self.l_max + 1) ** 2


@dataclass
class Scene:
    """All Gaussians of one dynamic scene, struct-of-arrays.

    means:          (N, 4) centers (x, y, z, t)
    log_scales:     (N, 4) per-axis log standard deviations
    rotors_left:    (N, 4) left quaternion of the 4D rotation, unnormalized
    rotors_right:   (N, 4) right quaternion, unnormalized
    opacity_logits: (N,)   sigmoid^-1 of opacity
    sh:             (N, 3, B) color coefficients, B = sh_config.n_basis,
                    basis index b = n * (l_max+1)**2 + k with k the flat
                    spherical index (l, m)
    """

    means: np.ndarray
    log_scales: np.ndarray
    rotors_left: np.ndarray
    rotors_right: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    duration: float = 1.0
    sh_config: ShConfig = field(default_factory=ShConfig)

    def __post_init__(self):
        n = self.means.shape[0] if self.means.ndim == 2 else -1
        checks = [
            ("means", self.means, (n, 4)),
            ("log_scales", self.log_scales, (n, 4)),
            ("rotors_left", self.rotors_left, (n, 4)),
            ("rotors_right", self.rotors_right, (n, 4)),
            ("opacity_logits", self.opacity_logits, (n,)),
            ("sh", self.sh, (n, 3, self.sh_config.n_basis)),
        ]
        for name, arr, want in checks:
            if arr.shape != want:
                raise ShapeMismatchError(
                    f"scene.{name}: expected shape {want}, got {arr.shape}"
                )
        if not (self.duration > 0):
            raise ShapeMismatchError(f"duration must be positive, got {self.duration}")

    @property
    def n_gaussians(self) -> int:
        return self.means.shape[0]

    def copy(self) -> "Scene":
        return replace(
            self,
            means=self.means.copy(),
            log_scales=self.log_scales.copy(),
            rotors_left=self.rotors_left.copy(),
            rotors_right=self.rotors_right.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh=self.sh.copy(),
        )

    def select(self, index) -> "Scene":
        """New scene keeping rows picked by a boolean mask or index array."""
        return replace(
            self,
            means=self.means[index].copy(),
            log_scales=self.log_scales[index].copy(),
            rotors_left=self.rotors_left[index].copy(),
            rotors_right=self.rotors_right[index].copy(),
            opacity_logits=self.opacity_logits[index].copy(),
            sh=self.sh[index].copy(),
        )

    def quantize_f32(self) -> None:
        """Snap all parameters to the nearest float32 value, in place."""
        for arr in (self.means, self.log_scales, self.rotors_left,
                    self.rotors_right, self.opacity_logits, self.sh):
            arr[...] = arr.astype(np.float32)


def concat_scenes(a: Scene, b: Scene) -> Scene:
    """Stack the Gaussians of two scenes; configs must match."""
    if a.sh_config != b.sh_config:
        raise ShapeMismatchError(
            f"sh_config mismatch: {a.sh_config} vs {b.sh_config}"
        )
    if a.duration != b.duration:
        raise ShapeMismatchError(
            f"duration mismatch: {a.duration} vs {b.duration}"
        )
    return replace(
        a,
        means=np.concatenate([a.means, b.means]),
        log_scales=np.concatenate([a.log_scales, b.log_scales]),
        rotors_left=np.concatenate([a.rotors_left, b.rotors_left]),
        rotors_right=np.concatenate([a.rotors_right, b.rotors_right]),
        opacity_logits=np.concatenate([a.opacity_logits, b.opacity_logits]),
        sh=np.concatenate([a.sh, b.sh]),
    )


def empty_scene(n: int, sh_config: ShConfig, duration: float = 1.0) -> Scene:
    """Allocate an all-zero scene of n Gaussians (identity rotors)."""
    rotors = np.zeros((n, 4))
    rotors[:, 0] = 1.0
    return Scene(
        means=np.zeros((n, 4)),
        log_scales=np.zeros((n, 4)),
        rotors_left=rotors.copy(),
        rotors_right=rotors.copy(),
        opacity_logits=np.zeros(n),
        sh=np.zeros((n, 3, sh_config.n_basis)),
        duration=duration,
        sh_config=sh_config,
    )


def sigmoid(x):
    # Stable in both tails.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def activated_scales(scene: Scene) -> np.ndarray:
    """Per-axis standard deviations, floored away from zero."""
    return np.maximum(np.exp(scene.log_scales), MIN_SCALE)


def activated_opacity(scene: Scene) -> np.ndarray:
    return sigmoid(scene.opacity_logits)
