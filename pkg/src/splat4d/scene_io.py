"""Dataset loading, scene initializers, checkpoints, image and flow I/O.

Datasets are a directory with a manifest.json describing cameras and posed,
timestamped frames; images are 8-bit sRGB PNGs decoded to linear-RGB floats.
Frame times are divided by the manifest duration so the in-memory dataset
always spans [0, 1]; the original duration is kept in metadata.

Checkpoints are a little-endian binary format: 4-byte magic "G4DS",
u32 version (1), u32 Gaussian count, u8 l_max, u8 n_max, two reserved bytes,
f32 duration, then per-Gaussian float32 records (mean[4], log_scales[4],
q_left[4], q_right[4], opacity_logit, sh[3*B] in C order).  Scene arrays are
kept float32-representable in memory, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .cameras import Camera
from .errors import (
    CheckpointError,
    DatasetError,
    SchemaError,
    ShapeMismatchError,
    Splat4DError,
)
from .harmonics import dc_from_rgb
from .scene import Scene, ShConfig, logit

CHECKPOINT_MAGIC = b"G4DS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIBBxxf")  # magic, version, count, l_max, n_max, duration

DEFAULT_POINT_OPACITY = 0.1
KNN_NEIGHBORS = 3


# ---------------------------------------------------------------------------
# Images (8-bit sRGB PNG on disk, linear-RGB float in memory)

def srgb_to_linear(encoded):
    s = np.asarray(encoded, dtype=np.float64)
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(linear):
    l = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(l <= 0.0031308, l * 12.92,
                    1.055 * np.power(l, 1.0 / 2.4) - 0.055)


def load_image(path) -> np.ndarray:
    """Read an image file into an (H, W, 3) linear-RGB float array."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return srgb_to_linear(arr)


def save_image(path, img) -> None:
    """Write a linear-RGB float array as an 8-bit sRGB image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"save_image: expected HxWx3, got {img.shape}")
    u8 = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    Image.fromarray(u8, "RGB").save(path)


# ---------------------------------------------------------------------------
# Flow maps (.npy binary; HSV visualization PNG)

def save_flow(path, flow) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeMismatchError(f"save_flow: expected HxWx2, got {flow.shape}")
    np.save(path, flow)


def load_flow(path) -> np.ndarray:
    try:
        flow = np.load(path)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read flow {path}: {exc}") from exc
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DatasetError(f"flow {path}: expected HxWx2, got {flow.shape}")
    return np.asarray(flow, dtype=np.float64)


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    rgb = np.choose(i[..., None], [
        np.stack([v, t, p], -1), np.stack([q, v, p], -1),
        np.stack([p, v, t], -1), np.stack([p, q, v], -1),
        np.stack([t, p, v], -1), np.stack([v, p, q], -1)])
    return rgb


def flow_to_image(flow, percentile: float = 99.0) -> np.ndarray:
    """Standard flow visualization: hue = direction, value = magnitude.

    Magnitude is normalized to the given percentile so isolated spikes do
    not wash out the rest of the image.  Returns an (H, W, 3) uint8 array.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeMismatchError(f"flow_to_image: expected HxWx2, got {flow.shape}")
    mag = np.linalg.norm(flow, axis=-1)
    hue = (np.arctan2(-flow[..., 1], -flow[..., 0]) / (2 * np.pi) + 0.5) % 1.0
    vmax = np.percentile(mag, percentile)
    if vmax <= 0:
        vmax = 1.0
    value = np.minimum(mag / vmax, 1.0)
    rgb = _hsv_to_rgb(hue, np.ones_like(value), value)
    return np.round(rgb * 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# Checkpoints

def _record_width(cfg: ShConfig) -> int:
    return 17 + 3 * cfg.n_basis


def save_checkpoint(scene: Scene, path) -> None:
    """Write the scene's parameters; see the module docstring for layout.

    The harmonic period is not stored: the on-disk convention is that color
    cycles over the scene duration, which load_checkpoint restores.
    """
    cfg = scene.sh_config
    n = scene.n_gaussians
    rec = np.empty((n, _record_width(cfg)), dtype="<f4")
    rec[:, 0:4] = scene.means
    rec[:, 4:8] = scene.log_scales
    rec[:, 8:12] = scene.rotors_left
    rec[:, 12:16] = scene.rotors_right
    rec[:, 16] = scene.opacity_logits
    rec[:, 17:] = scene.sh.reshape(n, 3 * cfg.n_basis)
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, n,
                          cfg.l_max, cfg.n_max, scene.duration)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rec.tobytes(order="C"))


def load_checkpoint(path) -> Scene:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise CheckpointError(
            f"{path}: truncated header, {len(blob)} bytes "
            f"(need {_HEADER.size})")
    magic, version, count, l_max, n_max, duration = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r} at byte 0")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported version {version} at byte 4")
    try:
        cfg = ShConfig(l_max=l_max, n_max=n_max,
                       period=float(duration) if duration > 0 else 1.0)
    except ShapeMismatchError as exc:
        raise CheckpointError(f"{path}: invalid header at byte 12: {exc}") from exc
    if not np.isfinite(duration) or duration <= 0:
        raise CheckpointError(
            f"{path}: invalid duration {duration} at byte 16")
    width = _record_width(cfg)
    expect = _HEADER.size + 4 * width * count
    if len(blob) != expect:
        raise CheckpointError(
            f"{path}: payload is {len(blob)} bytes, expected {expect} "
            f"(records of {4 * width} bytes start at byte {_HEADER.size})")
    rec = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    rec = rec.reshape(count, width).astype(np.float64)
    return Scene(
        means=rec[:, 0:4].copy(),
        log_scales=rec[:, 4:8].copy(),
        rotors_left=rec[:, 8:12].copy(),
        rotors_right=rec[:, 12:16].copy(),
        opacity_logits=rec[:, 16].copy(),
        sh=rec[:, 17:].reshape(count, 3, cfg.n_basis).copy(),
        duration=float(duration),
        sh_config=cfg,
    )


# ---------------------------------------------------------------------------
# Manifest schema

def _field(obj, key, path, kinds, kind_name):
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}: missing required field")
    value = obj[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise SchemaError(f"{path}.{key}: expected {kind_name}, "
                          f"got {type(value).__name__}")
    return value


def _number(obj, key, path, *, positive=False, nonneg=False):
    value = float(_field(obj, key, path, (int, float), "a number"))
    if positive and not value > 0:
        raise SchemaError(f"{path}.{key}: expected a positive number, got {value}")
    if nonneg and value < 0:
        raise SchemaError(f"{path}.{key}: expected a non-negative number, got {value}")
    return value


def _string(obj, key, path):
    return _field(obj, key, path, (str,), "a string")


def _array(obj, key, path):
    return _field(obj, key, path, (list,), "an array")


def _camera_from_json(entry, path) -> tuple[str, Camera]:
    cam_id = _string(entry, "id", path)
    fx = _number(entry, "fx", path, positive=True)
    fy = _number(entry, "fy", path, positive=True)
    cx = _number(entry, "cx", path)
    cy = _number(entry, "cy", path)
    width = _number(entry, "width", path, positive=True)
    height = _number(entry, "height", path, positive=True)
    near = _number(entry, "near", path, positive=True)
    w2c = _array(entry, "world_to_camera", path)
    if len(w2c) != 16 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in w2c):
        raise SchemaError(f"{path}.world_to_camera: expected 16 numbers "
                          f"(row-major 4x4)")
    matrix = np.asarray(w2c, dtype=np.float64).reshape(4, 4)
    try:
        cam = Camera(fx=fx, fy=fy, cx=cx, cy=cy, width=int(width),
                     height=int(height), world_to_camera=matrix, near=near,
                     cam_id=cam_id)
    except Splat4DError as exc:
        raise SchemaError(f"{path}.world_to_camera: {exc}") from exc
    return cam_id, cam


def camera_to_json(cam: Camera) -> dict:
    return {
        "id": cam.cam_id,
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
        "world_to_camera": [float(v) for v in
                            np.asarray(cam.world_to_camera).reshape(-1)],
        "near": cam.near,
    }


def load_camera_json(path) -> Camera:
    """A single camera from a standalone pose file (camera_to_json schema)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read pose file {path}: {exc}") from exc
    try:
        entry = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(entry, dict):
        raise SchemaError(f"{path}: expected a JSON object describing one camera")
    _, cam = _camera_from_json(entry, str(path))
    return cam


# ---------------------------------------------------------------------------
# Dataset

@dataclass
class Frame:
    camera: str
    time: float          # normalized to [0, 1]
    image: np.ndarray    # (H, W, 3) linear RGB
    path: str


@dataclass
class Dataset:
    root: Path
    cameras: dict[str, Camera]
    frames: list[Frame]
    background: np.ndarray
    duration: float           # always 1.0 after normalization
    source_duration: float    # the manifest's raw time span
    train_idx: list[int]
    test_idx: list[int]

    @property
    def train_frames(self) -> list[Frame]:
        return [self.frames[i] for i in self.train_idx]

    @property
    def test_frames(self) -> list[Frame]:
        return [self.frames[i] for i in self.test_idx]

    @property
    def camera_extent(self) -> float:
        """Radius of the camera rig: max center distance from the centroid.

        Drives learning-rate and densification scales.  Degenerate rigs
        (single camera) fall back to 1.0.
        """
        centers = np.stack([c.center for c in self.cameras.values()])
        spread = np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()
        return float(spread) if spread > 1e-9 else 1.0


def load_dataset(root) -> Dataset:
    """Load manifest.json and every referenced image (eagerly).

    Schema violations raise SchemaError with the JSON path of the offending
    field; unreadable or mis-sized images raise DatasetError naming the frame.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise SchemaError("manifest root: expected an object")

    duration = _number(manifest, "duration", "manifest", positive=True)
    bg_raw = _array(manifest, "background", "manifest")
    if len(bg_raw) != 3 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in bg_raw):
        raise SchemaError("background: expected 3 numbers")
    background = np.asarray(bg_raw, dtype=np.float64)
    if background.min() < 0 or background.max() > 1:
        raise SchemaError("background: values must lie in [0, 1]")

    cameras: dict[str, Camera] = {}
    cam_entries = _array(manifest, "cameras", "manifest")
    if not cam_entries:
        raise SchemaError("cameras: must not be empty")
    for i, entry in enumerate(cam_entries):
        cam_id, cam = _camera_from_json(entry, f"cameras[{i}]")
        if cam_id in cameras:
            raise SchemaError(f"cameras[{i}].id: duplicate id {cam_id!r}")
        cameras[cam_id] = cam

    frames: list[Frame] = []
    frame_entries = _array(manifest, "frames", "manifest")
    if not frame_entries:
        raise SchemaError("frames: must not be empty")
    for j, entry in enumerate(frame_entries):
        path = f"frames[{j}]"
        cam_id = _string(entry, "camera", path)
        if cam_id not in cameras:
            raise SchemaError(f"{path}.camera: unknown camera {cam_id!r}")
        time = _number(entry, "time", path, nonneg=True)
        if time > duration * (1 + 1e-9):
            raise SchemaError(
                f"{path}.time: {time} exceeds the duration {duration}")
        image_rel = _string(entry, "image", path)
        image = load_image(root / image_rel)
        cam = cameras[cam_id]
        if image.shape[:2] != (cam.height, cam.width):
            raise DatasetError(
                f"frame {j} image {image_rel}: size {image.shape[1]}x"
                f"{image.shape[0]} does not match camera {cam_id} "
                f"({cam.width}x{cam.height})")
        frames.append(Frame(camera=cam_id, time=min(time / duration, 1.0),
                            image=image, path=image_rel))

    test_raw = _array(manifest, "test_frames", "manifest")
    test_idx: list[int] = []
    for k, v in enumerate(test_raw):
        if not isinstance(v, int) or isinstance(v, bool):
            raise SchemaError(f"test_frames[{k}]: expected an integer index")
        if not 0 <= v < len(frames):
            raise SchemaError(
                f"test_frames[{k}]: index {v} out of range "
                f"(have {len(frames)} frames)")
        test_idx.append(v)
    test_set = set(test_idx)
    train_idx = [i for i in range(len(frames)) if i not in test_set]
    if not train_idx:
        raise SchemaError("test_frames: every frame is held out; "
                          "nothing left to train on")
    return Dataset(root=root, cameras=cameras, frames=frames,
                   background=background, duration=1.0,
                   source_duration=duration, train_idx=train_idx,
                   test_idx=test_idx)


# ---------------------------------------------------------------------------
# Initializers

def _knn_log_scales(points: np.ndarray) -> np.ndarray:
    """log(mean distance to the 3 nearest neighbors), isotropic."""
    n = points.shape[0]
    if n < 2:
        return np.full((n, 3), np.log(0.1))
    k = min(KNN_NEIGHBORS, n - 1)
    dist, _ = cKDTree(points).query(points, k=k + 1)
    mean_d = np.maximum(dist[:, 1:].mean(axis=1), 1e-7)
    return np.repeat(np.log(mean_d)[:, None], 3, axis=1)


def init_from_points(points, colors, duration: float = 1.0,
                     sh_config: ShConfig | None = None,
                     rng: np.random.Generator | None = None,
                     time_mode: str = "uniform") -> Scene:
    """One Gaussian per point: identity rotors, kNN spatial scales,
    temporal scale duration/2, opacity 0.1, colors inverted into the DC
    coefficients.  Time centers are uniform over [0, duration] (or all at
    the midpoint with time_mode="midpoint")."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise ShapeMismatchError(
            f"init_from_points: expected a non-empty (N, 3) array, "
            f"got {points.shape}")
    colors = np.broadcast_to(np.asarray(colors, dtype=np.float64),
                             points.shape).copy()
    if time_mode not in ("uniform", "midpoint"):
        raise Splat4DError(f"unknown time_mode {time_mode!r}")
    cfg = sh_config if sh_config is not None else ShConfig(period=duration)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = points.shape[0]
    means = np.zeros((n, 4))
    means[:, :3] = points
    if time_mode == "uniform":
        means[:, 3] = rng.uniform(0.0, duration, n)
    else:
        means[:, 3] = duration / 2.0
    log_scales = np.empty((n, 4))
    log_scales[:, :3] = _knn_log_scales(points)
    log_scales[:, 3] = np.log(duration / 2.0)
    rotors = np.zeros((n, 4))
    rotors[:, 0] = 1.0
    sh = np.zeros((n, 3, cfg.n_basis))
    sh[:, :, 0] = dc_from_rgb(colors)
    scene = Scene(means=means, log_scales=log_scales,
                  rotors_left=rotors.copy(), rotors_right=rotors.copy(),
                  opacity_logits=np.full(n, float(logit(DEFAULT_POINT_OPACITY))),
                  sh=sh, duration=duration, sh_config=cfg)
    scene.quantize_f32()
    return scene


def init_random_cube(count: int, half_extent: float = 1.2,
                     duration: float = 1.0,
                     rng: np.random.Generator | None = None,
                     sh_config: ShConfig | None = None) -> Scene:
    """Gray Gaussians uniform in the cube [-half_extent, half_extent]^3."""
    if count <= 0:
        raise ShapeMismatchError(f"init_random_cube: count must be > 0, got {count}")
    rng = rng if rng is not None else np.random.default_rng(0)
    points = rng.uniform(-half_extent, half_extent, (count, 3))
    return init_from_points(points, np.full((count, 3), 0.5), duration,
                            sh_config=sh_config, rng=rng)


def init_sphere_shell(count: int, radius: float, duration: float = 1.0,
                      rng: np.random.Generator | None = None,
                      sh_config: ShConfig | None = None) -> Scene:
    """Gray Gaussians uniform on a sphere surface (background shell).

    Returns a scene to append (concat_scenes) to a foreground init; count=0
    yields an empty scene so appending is a no-op.
    """
    cfg = sh_config if sh_config is not None else ShConfig(period=duration)
    if count == 0:
        from .scene import empty_scene
        return empty_scene(0, cfg, duration)
    rng = rng if rng is not None else np.random.default_rng(0)
    dirs = rng.normal(size=(count, 3))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    points = radius * dirs / norms
    return init_from_points(points, np.full((count, 3), 0.5), duration,
                            sh_config=cfg, rng=rng)


# ---------------------------------------------------------------------------
# PLY import (COLMAP-style colored point clouds)

_PLY_DTYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
}


def load_ply(path):
    """Read vertex positions and colors from an ascii or binary PLY.

    Returns (points (N, 3) float64, colors (N, 3) float in [0, 1]).  Colors
    default to mid-gray when the file has no red/green/blue properties.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read PLY {path}: {exc}") from exc
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise DatasetError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", "replace").splitlines()
    body = blob[end + len(b"end_header\n"):]

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] == "vertex":
                count = int(parts[2])
                in_vertex = True
            else:
                in_vertex = False
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise DatasetError(f"{path}: list properties unsupported")
            if parts[1] not in _PLY_DTYPES:
                raise DatasetError(f"{path}: unknown property type {parts[1]}")
            props.append((parts[2], _PLY_DTYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DatasetError(f"{path}: unsupported format {fmt!r}")
    if count is None or not props:
        raise DatasetError(f"{path}: no vertex element")
    names = [name for name, _ in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise DatasetError(f"{path}: vertex property {axis!r} missing")

    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, code) for name, code in props])
        need = count * dtype.itemsize
        if len(body) < need:
            raise DatasetError(
                f"{path}: vertex data truncated ({len(body)} of {need} bytes)")
        data = np.frombuffer(body, dtype=dtype, count=count)
    else:
        rows = [r for r in body.decode("ascii", "replace").split("\n")
                if r.strip()][:count]
        if len(rows) < count:
            raise DatasetError(f"{path}: vertex data truncated "
                               f"({len(rows)} of {count} rows)")
        table = np.array([r.split() for r in rows], dtype=np.float64)
        if table.shape[1] != len(props):
            raise DatasetError(f"{path}: expected {len(props)} columns, "
                               f"got {table.shape[1]}")
        data = {name: table[:, i] for i, (name, _) in enumerate(props)}

    points = np.stack([np.asarray(data["x"], np.float64),
                       np.asarray(data["y"], np.float64),
                       np.asarray(data["z"], np.float64)], axis=1)
    if all(c in names for c in ("red", "green", "blue")):
        cols = np.stack([np.asarray(data["red"], np.float64),
                         np.asarray(data["green"], np.float64),
                         np.asarray(data["blue"], np.float64)], axis=1)
        if fmt == "binary_little_endian" and \
                all(dict(props)[c] == "u1" for c in ("red", "green", "blue")):
            cols = cols / 255.0
        elif cols.max() > 1.0:
            cols = cols / 255.0
        colors = np.clip(cols, 0.0, 1.0)
    else:
        colors = np.full((count, 3), 0.5)
    return points, colors
