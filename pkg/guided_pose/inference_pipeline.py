"""Decoder outputs to per-class poses.

The segmentation is split into 4-connected components, one region per class is
selected, keypoints come from DKR or from RANSAC voting and each class is then
solved with EPnP inside RANSAC. Classes run independently and results are
always reported in ascending class order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .dkr import Keypoints2D, region_pixels, softplus_weights, solve_region
from .errors import ParameterError, ShapeError, ValidationError
from .pose_geometry import CameraIntrinsics, KeypointModel, PoseEstimate, RansacParams, ransac_pnp
from .semantic_norm import SoftSegmentation
from .tensor_io import format_float

log = logging.getLogger(__name__)

DEFAULT_MIN_COMPONENT_PIXELS = 18
DEFAULT_VOTING_HYPOTHESES = 128
DEFAULT_INLIER_COSINE = 0.999
PARALLEL_TOLERANCE = 1e-12

MODES = ("dkr", "rv")
REGION_STRATEGIES = ("largest", "second", "all")
STATUSES = ("ok", "low_rank", "pnp_failed")

# 4-connectivity
_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class Component:
    label: int
    class_id: int
    pixel_count: int
    bbox: Tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    labels: np.ndarray
    components: Tuple[Component, ...]

    def for_class(self, class_id: int) -> List[Component]:
        return [c for c in self.components if c.class_id == class_id]

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(sorted({c.class_id for c in self.components}))


@dataclass(frozen=True)
class VotingParams:
    hypotheses: int = DEFAULT_VOTING_HYPOTHESES
    inlier_cosine: float = DEFAULT_INLIER_COSINE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hypotheses <= 0:
            raise ParameterError("voting needs at least one hypothesis")
        if not -1.0 <= self.inlier_cosine < 1.0:
            raise ParameterError("inlier cosine threshold must lie in [-1, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "dkr"
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS
    voting: VotingParams = VotingParams()
    ransac: RansacParams = RansacParams()
    region_strategy: str = "largest"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.min_component_pixels < 2:
            raise ParameterError("min_component_pixels must be at least 2")
        if self.region_strategy not in REGION_STRATEGIES:
            raise ParameterError(f"region strategy must be one of {REGION_STRATEGIES}")


@dataclass(frozen=True, eq=False)
class ClassResult:
    class_id: int
    keypoints: Keypoints2D
    pose: Optional[PoseEstimate]
    status: str


@dataclass(frozen=True, eq=False)
class InferenceResult:
    results: Tuple[ClassResult, ...]
    timings: Dict[str, float] = field(default_factory=dict)

    def for_class(self, class_id: int) -> ClassResult:
        for result in self.results:
            if result.class_id == class_id:
                return result
        raise KeyError(class_id)


@dataclass(frozen=True, eq=False)
class PoseRecord:
    class_id: int
    pose: Optional[PoseEstimate]
    keypoints: np.ndarray
    status: str


# -- channel arithmetic -------------------------------------------------------


def decoder_channel_count(num_objects: int, num_keypoints: int) -> int:
    """2m vector channels + m confidences + (n + 1) segmentation classes."""
    if num_objects < 0 or num_keypoints < 1:
        raise ParameterError("need n >= 0 objects and m >= 1 keypoints")
    return 3 * num_keypoints + num_objects + 1


def split_decoder_output(
    tensor: np.ndarray, num_objects: int, num_keypoints: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split an H x W x (3m + n + 1) decoder tensor into (seg logits, field, raw confidences)."""
    expected = decoder_channel_count(num_objects, num_keypoints)
    if tensor.ndim != 3 or tensor.shape[2] != expected:
        raise ShapeError(f"decoder output must have {expected} channels, got shape {tensor.shape}")
    seg_end = num_objects + 1
    field_end = seg_end + 2 * num_keypoints
    return tensor[..., :seg_end], tensor[..., seg_end:field_end], tensor[..., field_end:]


# -- connected components -----------------------------------------------------


def connected_components(seg: SoftSegmentation) -> ComponentLabeling:
    """4-connected components of equal argmax class, labelled 1.. in row-major first-pixel order."""
    class_map = seg.labels
    height, width = class_map.shape
    raw_labels = np.zeros((height, width), dtype=np.int64)
    offset = 0
    for class_id in range(1, seg.num_classes):
        labelled, count = ndimage.label(class_map == class_id, structure=_STRUCTURE)
        if count:
            raw_labels[labelled > 0] = labelled[labelled > 0] + offset
            offset += count

    flat = raw_labels.reshape(-1)
    present, first = np.unique(flat, return_index=True)
    order = [raw for _, raw in sorted(zip(first, present)) if raw > 0]
    first_pixel = dict(zip(present.tolist(), first.tolist()))
    relabel = np.zeros(offset + 1, dtype=np.int64)
    relabel[order] = np.arange(1, len(order) + 1)
    labels = relabel[raw_labels]

    components = []
    boxes = ndimage.find_objects(labels)
    counts = np.bincount(labels.reshape(-1), minlength=len(order) + 1)
    for label in range(1, len(order) + 1):
        rows, cols = boxes[label - 1]
        y0, x0 = rows.start, cols.start
        components.append(
            Component(
                label=label,
                class_id=int(class_map.flat[first_pixel[order[label - 1]]]),
                pixel_count=int(counts[label]),
                bbox=(x0, y0, cols.stop - 1, rows.stop - 1),
            )
        )
    return ComponentLabeling(labels=labels, components=tuple(components))


def select_regions(
    labeling: ComponentLabeling,
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS,
    strategy: str = "largest",
) -> Dict[int, np.ndarray]:
    """Boolean region per class.

    ``largest`` keeps the biggest component (ties go to the lower label),
    ``second`` the runner-up and ``all`` the union of every component. A
    region smaller than ``min_component_pixels`` leaves its class absent.
    """
    if strategy not in REGION_STRATEGIES:
        raise ParameterError(f"region strategy must be one of {REGION_STRATEGIES}")
    regions: Dict[int, np.ndarray] = {}
    for class_id in labeling.class_ids:
        ranked = sorted(labeling.for_class(class_id), key=lambda c: (-c.pixel_count, c.label))
        if strategy == "all":
            mask = np.isin(labeling.labels, [c.label for c in ranked])
        else:
            index = 0 if strategy == "largest" else 1
            if len(ranked) <= index:
                continue
            mask = labeling.labels == ranked[index].label
        if np.count_nonzero(mask) < min_component_pixels:
            log.debug("class %d region below %d pixels, reported absent", class_id, min_component_pixels)
            continue
        regions[class_id] = mask
    return regions


def largest_component_per_class(
    labeling: ComponentLabeling, min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS
) -> Dict[int, np.ndarray]:
    return select_regions(labeling, min_component_pixels, "largest")


# -- RANSAC voting ------------------------------------------------------------


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.where(norms > 0.0, vectors / np.where(norms > 0.0, norms, 1.0), 0.0)


def _intersections(points: np.ndarray, directions: np.ndarray, first: np.ndarray, second: np.ndarray):
    d1, d2 = directions[first], directions[second]
    det = d1[:, 0] * (-d2[:, 1]) - d1[:, 1] * (-d2[:, 0])
    delta = points[second] - points[first]
    ok = np.abs(det) > PARALLEL_TOLERANCE
    safe = np.where(ok, det, 1.0)
    s = (delta[:, 0] * (-d2[:, 1]) - delta[:, 1] * (-d2[:, 0])) / safe
    return points[first] + s[:, None] * d1, ok


def _least_squares_point(points: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, int]:
    normals = np.stack([-directions[:, 1], directions[:, 0]], axis=1)
    offsets = np.sum(normals * points, axis=1)
    matrix = normals.T @ normals
    solution, _, rank, _ = np.linalg.lstsq(matrix, normals.T @ offsets, rcond=None)
    return solution, int(rank)


def vote_keypoint(
    points: np.ndarray,
    directions: np.ndarray,
    params: VotingParams,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, bool]:
    n = len(points)
    if n == 2:
        first, second = np.array([0]), np.array([1])
    else:
        first = rng.integers(0, n, size=params.hypotheses)
        second = (first + rng.integers(1, n, size=params.hypotheses)) % n
    candidates, ok = _intersections(points, directions, first, second)
    if not ok.any():
        return np.full(2, np.nan), False
    candidates = candidates[ok]

    best_votes = -1
    best_inliers = None
    for candidate in candidates:
        towards = _unit_rows(candidate[None, :] - points)
        cosines = np.sum(towards * directions, axis=1)
        inliers = cosines > params.inlier_cosine
        votes = int(np.count_nonzero(inliers))
        if votes > best_votes:
            best_votes, best_inliers = votes, inliers
    if best_votes < 2:
        return candidates[0], False
    point, rank = _least_squares_point(points[best_inliers], directions[best_inliers])
    return point, rank == 2


def ransac_voting(
    region: np.ndarray,
    field: np.ndarray,
    params: VotingParams = VotingParams(),
    class_id: int = 0,
) -> Keypoints2D:
    """Hough-style voting over pair intersections, refined by unweighted LS on the winner's inliers."""
    pixels = np.asarray(region, dtype=np.int64).reshape(-1, 2)
    m = field.shape[2] // 2
    if len(pixels) < 2:
        return Keypoints2D(np.full((m, 2), np.nan), np.zeros(m, dtype=bool), (None,) * m, absent=len(pixels) == 0)
    xs, ys = pixels[:, 0], pixels[:, 1]
    positions = pixels.astype(np.float64)
    points = np.full((m, 2), np.nan)
    valid = np.zeros(m, dtype=bool)
    for k in range(m):
        rng = np.random.default_rng([params.seed, class_id, k])
        directions = _unit_rows(np.asarray(field[ys, xs, 2 * k : 2 * k + 2], dtype=np.float64))
        points[k], valid[k] = vote_keypoint(positions, directions, params, rng)
    return Keypoints2D(points=points, valid=valid, diagnostics=(None,) * m)


# -- end to end ---------------------------------------------------------------


def _check_inputs(seg: SoftSegmentation, field: np.ndarray, raw_conf: np.ndarray, models) -> int:
    if raw_conf.ndim != 3 or raw_conf.shape[:2] != seg.shape:
        raise ShapeError(f"confidences {raw_conf.shape} do not match segmentation {seg.shape}")
    m = raw_conf.shape[2]
    if field.shape != seg.shape + (2 * m,):
        raise ShapeError(f"field must be {seg.shape + (2 * m,)} for {m} keypoints, got {field.shape}")
    for model in models.values():
        if model.num_keypoints != m:
            raise ShapeError(f"class {model.class_id} model has {model.num_keypoints} keypoints, tensors carry {m}")
    return m


def _solve_class(
    class_id: int,
    mask: np.ndarray,
    field: np.ndarray,
    weights: np.ndarray,
    model: KeypointModel,
    K: CameraIntrinsics,
    cfg: PipelineConfig,
) -> Tuple[ClassResult, float, float]:
    started = time.perf_counter()
    pixels = region_pixels(mask)
    if cfg.mode == "dkr":
        keypoints = solve_region(pixels, field, weights)
    else:
        voting = VotingParams(cfg.voting.hypotheses, cfg.voting.inlier_cosine, cfg.seed)
        keypoints = ransac_voting(pixels, field, voting, class_id=class_id)
    regressed = time.perf_counter()

    usable = keypoints.valid & np.all(np.isfinite(keypoints.points), axis=1)
    pose = None
    if np.count_nonzero(usable) < 4:
        status = "low_rank"
    else:
        ransac = replace(cfg.ransac, seed=cfg.ransac.seed + class_id)
        pose = ransac_pnp(model.keypoints3d[usable], keypoints.points[usable], K, ransac)
        status = "ok" if pose is not None else "pnp_failed"
    finished = time.perf_counter()
    return ClassResult(class_id, keypoints, pose, status), regressed - started, finished - regressed


def infer_poses(
    seg: SoftSegmentation,
    field: np.ndarray,
    raw_conf: np.ndarray,
    models: Mapping[int, KeypointModel],
    K: CameraIntrinsics,
    cfg: PipelineConfig = PipelineConfig(),
    workers: Optional[int] = None,
) -> InferenceResult:
    field = np.asarray(field, dtype=np.float64)
    raw_conf = np.asarray(raw_conf, dtype=np.float64)
    _check_inputs(seg, field, raw_conf, models)

    started = time.perf_counter()
    labeling = connected_components(seg)
    unknown = [c for c in labeling.class_ids if c not in models]
    if unknown:
        raise ValidationError(f"segmentation holds classes without a keypoint model: {unknown}")
    regions = select_regions(labeling, cfg.min_component_pixels, cfg.region_strategy)
    cc_time = time.perf_counter() - started

    weights = softplus_weights(raw_conf)
    jobs = sorted(regions.items())

    def run(job):
        class_id, mask = job
        return _solve_class(class_id, mask, field, weights, models[class_id], K, cfg)

    if workers == 1 or len(jobs) <= 1:
        outcomes = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))

    results = tuple(sorted((o[0] for o in outcomes), key=lambda r: r.class_id))
    timings = {
        "cc": cc_time,
        "keypoints": sum(o[1] for o in outcomes),
        "pnp": sum(o[2] for o in outcomes),
    }
    for result in results:
        log.debug("class %d: %s", result.class_id, result.status)
    return InferenceResult(results=results, timings=timings)


# -- pose records -------------------------------------------------------------


def format_pose_record(result: ClassResult) -> str:
    """``class <id> R <9> t <3> keypoints <2m> status <s>``; a missing pose prints ``nan``."""
    if result.pose is not None:
        rotation = result.pose.R.reshape(-1)
        translation = result.pose.t
    else:
        rotation = np.full(9, np.nan)
        translation = np.full(3, np.nan)
    keypoints = result.keypoints.points.reshape(-1)
    return " ".join(
        [f"class {result.class_id}", "R", *(format_float(v) for v in rotation)]
        + ["t", *(format_float(v) for v in translation)]
        + ["keypoints", *(format_float(v) for v in keypoints)]
        + ["status", result.status]
    )


def parse_pose_records(text: str) -> List[PoseRecord]:
    records = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        layout_ok = (
            len(tokens) >= 19
            and tokens[0] == "class"
            and tokens[2] == "R"
            and tokens[12] == "t"
            and tokens[16] == "keypoints"
            and tokens[-2] == "status"
        )
        if not layout_ok:
            raise ValidationError(f"line {line_no}: malformed pose record")
        try:
            class_id = int(tokens[1])
            rotation = np.array([float(v) for v in tokens[3:12]])
            translation = np.array([float(v) for v in tokens[13:16]])
            keypoints = np.array([float(v) for v in tokens[17:-2]])
        except ValueError as exc:
            raise ValidationError(f"line {line_no}: pose record holds a non-numeric value") from exc
        status = tokens[-1]
        if status not in STATUSES or len(keypoints) % 2:
            raise ValidationError(f"line {line_no}: malformed pose record")
        pose = None
        if np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation)):
            pose = PoseEstimate(rotation.reshape(3, 3), translation)
        records.append(PoseRecord(class_id, pose, keypoints.reshape(-1, 2), status))
    return records


def describe_timings(timings: Mapping[str, float]) -> Sequence[str]:
    return [f"timing.{name}_ms={format(1000.0 * value, '.3f')}" for name, value in sorted(timings.items())]

