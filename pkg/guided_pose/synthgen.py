"""Analytic synthetic scenes: spheres and boxes rendered as exact silhouettes,
with ground-truth vector fields, oracle confidences and seeded noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .dkr import CONFIDENCE_TARGET
from .errors import ParameterError, ValidationError
from .pose_geometry import NUM_KEYPOINTS, CameraIntrinsics, KeypointModel, PoseEstimate, pose_from_rotvec, project
from .semantic_norm import SoftSegmentation
from .tensor_io import SceneDescription, SceneObject, read_point_cloud

log = logging.getLogger(__name__)

SPHERE_VERTICES = 400
BOX_FACE_GRID = 7
ORACLE_ANGLE_SCALE = 0.05
ORACLE_WEIGHT_FLOOR = 1e-12
MAX_GENERATED_OBJECTS = 6

DEFAULT_IMAGE_SIZE = (240, 320)
DEFAULT_INTRINSICS = CameraIntrinsics(fx=500.0, fy=500.0, cx=160.0, cy=120.0)

# (model ref, rotation vector, translation); the first three overlap on screen
_LAYOUT = (
    ("sphere:0.045", (0.0, 0.0, 0.0), (-0.06, 0.0, 0.55)),
    ("box:0.04,0.03,0.025", (0.35, -0.5, 0.2), (0.02, 0.01, 0.6)),
    ("box:0.035,0.035,0.02", (-0.3, 0.25, 0.6), (0.09, -0.03, 0.5)),
    ("sphere:0.03", (0.0, 0.0, 0.0), (0.0, 0.07, 0.65)),
    ("box:0.03,0.02,0.02", (0.1, 0.4, -0.3), (-0.1, 0.06, 0.6)),
    ("box:0.025,0.025,0.04", (0.5, 0.1, 0.1), (0.1, 0.07, 0.55)),
)


@dataclass(frozen=True)
class Primitive:
    kind: str
    size: Tuple[float, ...]

    def __post_init__(self) -> None:
        expected = {"sphere": 1, "box": 3}.get(self.kind)
        if expected is None:
            raise ValidationError(f"unknown primitive {self.kind!r}")
        if len(self.size) != expected or not all(s > 0.0 and math.isfinite(s) for s in self.size):
            raise ValidationError(f"{self.kind} needs {expected} positive size values, got {self.size}")

    @property
    def ref(self) -> str:
        return f"{self.kind}:" + ",".join(repr(float(s)) for s in self.size)

    @property
    def symmetric(self) -> bool:
        return self.kind == "sphere"

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.size)) if self.kind == "box" else self.size[0]

    def vertices(self) -> np.ndarray:
        if self.kind == "sphere":
            return _fibonacci_sphere(SPHERE_VERTICES) * self.size[0]
        return _box_faces(np.asarray(self.size), BOX_FACE_GRID)

    def keypoint_model(self, class_id: int, num_keypoints: int = NUM_KEYPOINTS) -> KeypointModel:
        return KeypointModel.from_vertices(
            class_id, self.vertices(), symmetric=self.symmetric, num_keypoints=num_keypoints
        )


@dataclass(frozen=True)
class NoiseSpec:
    angular_sigma: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.angular_sigma >= 0.0:
            raise ParameterError("angular sigma must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ParameterError("outlier fraction must lie in [0, 1]")

    @property
    def is_clean(self) -> bool:
        return self.angular_sigma == 0.0 and self.outlier_fraction == 0.0


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    scene: SceneDescription
    seg: SoftSegmentation
    labels: np.ndarray
    field: np.ndarray
    raw_conf: np.ndarray
    keypoints: Dict[int, np.ndarray]
    models: Dict[int, KeypointModel]


def _fibonacci_sphere(count: int) -> np.ndarray:
    index = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * index / count)
    azimuth = math.pi * (1.0 + math.sqrt(5.0)) * index
    return np.stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1
    )


def _box_faces(half: np.ndarray, grid: int) -> np.ndarray:
    ticks = np.linspace(-1.0, 1.0, grid)
    u, v = np.meshgrid(ticks, ticks, indexing="ij")
    u, v = u.reshape(-1), v.reshape(-1)
    faces = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            face = np.empty((len(u), 3))
            face[:, axis] = sign
            face[:, others[0]] = u
            face[:, others[1]] = v
            faces.append(face)
    return np.unique(np.concatenate(faces), axis=0) * half


def primitive_from_ref(ref: str) -> Primitive:
    """``sphere:<radius>`` or ``box:<hx>,<hy>,<hz>`` (meters)."""
    kind, _, values = ref.partition(":")
    try:
        size = tuple(float(v) for v in values.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad primitive reference {ref!r}") from exc
    return Primitive(kind, size)


def is_primitive_ref(ref: str) -> bool:
    return ref.startswith(("sphere:", "box:"))


def scene_models(
    scene: SceneDescription,
    num_keypoints: int = NUM_KEYPOINTS,
    base_dir: Optional[Path] = None,
) -> Dict[int, KeypointModel]:
    """Keypoint models for every object; non-primitive refs are point-cloud paths."""
    models = {}
    for obj in sorted(scene.objects, key=lambda o: o.class_id):
        if is_primitive_ref(obj.model_ref):
            primitive = primitive_from_ref(obj.model_ref)
            models[obj.class_id] = KeypointModel.from_vertices(
                obj.class_id,
                primitive.vertices(),
                symmetric=obj.symmetric,
                num_keypoints=num_keypoints,
            )
        else:
            path = Path(obj.model_ref)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            models[obj.class_id] = KeypointModel.from_vertices(
                obj.class_id, read_point_cloud(path), symmetric=obj.symmetric, num_keypoints=num_keypoints
            )
    return models


def default_scene() -> SceneDescription:
    """Sphere plus two boxes with mutual occlusion on a 240 x 320 image."""
    return generate_scene(3, seed=None)


def generate_scene(num_objects: int, seed: Optional[int] = 0) -> SceneDescription:
    """First ``num_objects`` layout slots; a seed adds a small rotation jitter to the boxes."""
    if not 0 <= num_objects <= MAX_GENERATED_OBJECTS:
        raise ParameterError(f"object count must lie in [0, {MAX_GENERATED_OBJECTS}]")
    rng = np.random.default_rng(seed) if seed is not None else None
    objects = []
    for index, (ref, rotvec, translation) in enumerate(_LAYOUT[:num_objects]):
        primitive = primitive_from_ref(ref)
        rotation = Rotation.from_rotvec(rotvec)
        if rng is not None and not primitive.symmetric:
            rotation = Rotation.from_rotvec(rng.normal(scale=0.1, size=3)) * rotation
        pose = pose_from_rotvec(rotation.as_rotvec(), translation)
        objects.append(SceneObject(index + 1, pose, primitive.ref, symmetric=primitive.symmetric))
    return SceneDescription(objects=tuple(objects), intrinsics=DEFAULT_INTRINSICS, image_size=DEFAULT_IMAGE_SIZE)


# -- rasterisation ------------------------------------------------------------


def _pixel_rays(image_size: Tuple[int, int], K: CameraIntrinsics) -> np.ndarray:
    height, width = image_size
    ys, xs = np.indices((height, width), dtype=np.float64)
    return np.stack([(xs - K.cx) / K.fx, (ys - K.cy) / K.fy, np.ones_like(xs)], axis=2)


def _sphere_depth(rays: np.ndarray, centre: np.ndarray, radius: float) -> np.ndarray:
    a = np.sum(rays * rays, axis=2)
    b = rays @ centre
    c = float(centre @ centre) - radius * radius
    disc = b * b - a * c
    hit = disc >= 0.0
    depth = (b - np.sqrt(np.where(hit, disc, 0.0))) / a
    return np.where(hit & (depth > 0.0), depth, np.inf)


def _box_depth(rays: np.ndarray, pose: PoseEstimate, half: np.ndarray) -> np.ndarray:
    origin = -pose.R.T @ pose.t
    local = rays @ pose.R
    near = np.full(rays.shape[:2], -np.inf)
    far = np.full(rays.shape[:2], np.inf)
    inside = np.ones(rays.shape[:2], dtype=bool)
    for axis in range(3):
        e = local[..., axis]
        moving = e != 0.0
        safe = np.where(moving, e, 1.0)
        t1 = (-half[axis] - origin[axis]) / safe
        t2 = (half[axis] - origin[axis]) / safe
        near = np.where(moving, np.maximum(near, np.minimum(t1, t2)), near)
        far = np.where(moving, np.minimum(far, np.maximum(t1, t2)), far)
        inside &= moving | (abs(origin[axis]) <= half[axis])
    hit = inside & (near <= far) & (near > 0.0)
    return np.where(hit, near, np.inf)


def rasterize_masks(scene: SceneDescription) -> Tuple[SoftSegmentation, np.ndarray]:
    """One-hot segmentation and label map; the nearest surface owns each pixel centre."""
    rays = _pixel_rays(scene.image_size, scene.intrinsics)
    depth = np.full(scene.image_size, np.inf)
    labels = np.zeros(scene.image_size, dtype=np.int64)
    for obj in sorted(scene.objects, key=lambda o: o.class_id):
        primitive = primitive_from_ref(obj.model_ref)
        if obj.pose.t[2] - primitive.bounding_radius <= 0.0:
            raise ValidationError(f"class {obj.class_id} is not entirely in front of the camera")
        if primitive.kind == "sphere":
            surface = _sphere_depth(rays, obj.pose.t, primitive.size[0])
        else:
            surface = _box_depth(rays, obj.pose, np.asarray(primitive.size))
        closer = surface < depth
        depth[closer] = surface[closer]
        labels[closer] = obj.class_id
    num_classes = max([1, *scene.class_ids]) + 1
    return SoftSegmentation.from_labels(labels, num_classes), labels


def project_keypoints(scene: SceneDescription, models: Mapping[int, KeypointModel]) -> Dict[int, np.ndarray]:
    return {
        obj.class_id: project(models[obj.class_id].keypoints3d, obj.pose, scene.intrinsics)
        for obj in sorted(scene.objects, key=lambda o: o.class_id)
    }


# -- fields and confidences ---------------------------------------------------


def gt_vector_fields(labels: np.ndarray, keypoints2d: Mapping[int, np.ndarray], num_keypoints: int) -> np.ndarray:
    """Unit vectors from every foreground pixel to its class keypoints; background stays zero."""
    labels = np.asarray(labels)
    height, width = labels.shape
    field = np.zeros((height, width, 2 * num_keypoints))
    for class_id, points in sorted(keypoints2d.items()):
        ys, xs = np.nonzero(labels == class_id)
        if len(ys) == 0:
            continue
        pixels = np.stack([xs, ys], axis=1).astype(np.float64)
        for k, target in enumerate(np.asarray(points, dtype=np.float64).reshape(num_keypoints, 2)):
            diff = target[None, :] - pixels
            norms = np.linalg.norm(diff, axis=1)
            unit = np.where(
                norms[:, None] > 0.0, diff / np.where(norms > 0.0, norms, 1.0)[:, None], np.array([1.0, 0.0])
            )
            field[ys, xs, 2 * k : 2 * k + 2] = unit
    return field


def sample_noise(shape: Tuple[int, int, int], spec: NoiseSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rotation angles H x W x m, outlier pixel mask H x W, replacement angles H x W x m)."""
    rng = np.random.default_rng(spec.seed)
    angles = rng.normal(scale=spec.angular_sigma, size=shape) if spec.angular_sigma > 0.0 else np.zeros(shape)
    outliers = rng.random(shape[:2]) < spec.outlier_fraction
    replacement = rng.uniform(-math.pi, math.pi, size=shape)
    return angles, outliers, replacement


def perturb_fields(field: np.ndarray, spec: NoiseSpec, foreground: Optional[np.ndarray] = None) -> np.ndarray:
    """Rotate foreground vectors by Gaussian angles and swap outlier pixels for random directions."""
    field = np.asarray(field, dtype=np.float64)
    height, width, channels = field.shape
    m = channels // 2
    if foreground is None:
        foreground = np.any(field != 0.0, axis=2)
    if spec.is_clean:
        return field.copy()
    angles, outliers, replacement = sample_noise((height, width, m), spec)
    vectors = field.reshape(height, width, m, 2)
    cos, sin = np.cos(angles), np.sin(angles)
    rotated = np.stack(
        [cos * vectors[..., 0] - sin * vectors[..., 1], sin * vectors[..., 0] + cos * vectors[..., 1]], axis=-1
    )
    random_vectors = np.stack([np.cos(replacement), np.sin(replacement)], axis=-1)
    rotated = np.where(outliers[..., None, None], random_vectors, rotated)
    noisy = np.where(foreground[..., None, None], rotated, vectors)
    return noisy.reshape(height, width, channels)


def inverse_softplus(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    return np.where(weights > 20.0, weights + np.log(-np.expm1(-weights)), np.log(np.expm1(np.minimum(weights, 20.0))))


def oracle_confidences(clean: np.ndarray, noisy: np.ndarray, foreground: np.ndarray) -> np.ndarray:
    """Raw confidences whose softplus is ``0.7 * exp(-(angle / 0.05)^2)`` of each vector's angular error."""
    height, width, channels = clean.shape
    m = channels // 2
    a = clean.reshape(height, width, m, 2)
    b = noisy.reshape(height, width, m, 2)
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = np.sum(a * b, axis=-1)
    error = np.abs(np.arctan2(cross, dot))
    weights = np.maximum(CONFIDENCE_TARGET * np.exp(-((error / ORACLE_ANGLE_SCALE) ** 2)), ORACLE_WEIGHT_FLOOR)
    raw = inverse_softplus(weights)
    return np.where(np.asarray(foreground, dtype=bool)[..., None], raw, 0.0)


def render_sample(
    scene: SceneDescription,
    noise: NoiseSpec = NoiseSpec(),
    num_keypoints: int = NUM_KEYPOINTS,
) -> SyntheticSample:
    """Everything a perfect decoder would emit for ``scene``, optionally with noisy fields."""
    seg, labels = rasterize_masks(scene)
    models = scene_models(scene, num_keypoints)
    keypoints = project_keypoints(scene, models)
    clean = gt_vector_fields(labels, keypoints, num_keypoints)
    foreground = labels > 0
    field = perturb_fields(clean, noise, foreground)
    raw_conf = oracle_confidences(clean, field, foreground)
    log.debug("rendered %d objects, %d foreground pixels", len(scene.objects), int(foreground.sum()))
    return SyntheticSample(
        scene=scene,
        seg=seg,
        labels=labels,
        field=field,
        raw_conf=raw_conf,
        keypoints=keypoints,
        models=models,
    )
