"""Keypoint selection, pinhole projection, EPnP + RANSAC pose solving and pose metrics.

Conventions: points are rows (N x 3 or N x 2), poses map object coordinates to
camera coordinates as ``X = R @ p + t``, translations are in meters and image
coordinates are (u, v) = (column, row) in pixels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation

from .errors import ParameterError, ProjectionError, ShapeError, SolverError, ValidationError

log = logging.getLogger(__name__)

NUM_KEYPOINTS = 9
ADD_THRESHOLD_FRACTION = 0.1
PROJECTION_THRESHOLD_PX = 5.0
MIN_DEPTH = 1e-9
ORTHONORMAL_TOLERANCE = 1e-6

DEFAULT_RANSAC_ITERATIONS = 100
DEFAULT_REPROJECTION_THRESHOLD = 8.0
DEFAULT_RANSAC_CONFIDENCE = 0.99
DEFAULT_REFINE_ITERATIONS = 20
DEFAULT_STEP_TOLERANCE = 1e-8

_BETA_TERMS = tuple((i, j) for j in range(4) for i in range(j + 1))
_DEGENERATE_SPREAD = 1e-10


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValidationError("focal lengths fx, fy must be positive")
        if not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise ValidationError("camera intrinsics must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    R: np.ndarray
    t: np.ndarray
    inlier_count: int = 0
    reproj_rmse: float = 0.0

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ShapeError(f"pose needs a 3x3 rotation and a 3-vector translation, got {R.shape} and {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValidationError("pose entries must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHONORMAL_TOLERANCE:
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise ValidationError("rotation determinant must be +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "PoseEstimate":
        return cls(np.eye(3), np.zeros(3))

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t


@dataclass(frozen=True, eq=False)
class KeypointModel:
    class_id: int
    keypoints3d: np.ndarray
    vertices: np.ndarray
    diameter: float
    symmetric: bool = False

    def __post_init__(self) -> None:
        keypoints = np.asarray(self.keypoints3d, dtype=np.float64)
        vertices = np.asarray(self.vertices, dtype=np.float64)
        if keypoints.ndim != 2 or keypoints.shape[1] != 3 or keypoints.shape[0] < 4:
            raise ShapeError(f"keypoints3d must be m x 3 with m >= 4, got {keypoints.shape}")
        if vertices.ndim != 2 or vertices.shape[1] != 3 or len(vertices) == 0:
            raise ShapeError(f"vertices must be a non-empty N x 3 cloud, got {vertices.shape}")
        if not self.diameter > 0.0:
            raise ValidationError("model diameter must be positive")
        object.__setattr__(self, "keypoints3d", keypoints)
        object.__setattr__(self, "vertices", vertices)

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoints3d)

    @classmethod
    def from_vertices(
        cls,
        class_id: int,
        vertices: np.ndarray,
        *,
        symmetric: bool = False,
        num_keypoints: int = NUM_KEYPOINTS,
        centre: str = "centroid",
    ) -> "KeypointModel":
        vertices = np.asarray(vertices, dtype=np.float64)
        return cls(
            class_id=class_id,
            keypoints3d=fps_keypoints(vertices, num_keypoints, centre=centre),
            vertices=vertices,
            diameter=model_diameter(vertices),
            symmetric=symmetric,
        )


@dataclass(frozen=True)
class RansacParams:
    iterations: int = DEFAULT_RANSAC_ITERATIONS
    reprojection_threshold: float = DEFAULT_REPROJECTION_THRESHOLD
    confidence: float = DEFAULT_RANSAC_CONFIDENCE
    seed: int = 0
    refine: bool = True
    refine_iterations: int = DEFAULT_REFINE_ITERATIONS
    step_tolerance: float = DEFAULT_STEP_TOLERANCE
    min_inliers: int = 4

    def __post_init__(self) -> None:
        if self.iterations <= 0:
            raise ParameterError("RANSAC iterations must be positive")
        if not self.reprojection_threshold > 0.0:
            raise ParameterError("reprojection threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ParameterError("RANSAC confidence must be in (0, 1)")
        if self.min_inliers < 4:
            raise ParameterError("at least 4 inliers are needed to accept a pose")


@dataclass(frozen=True)
class MetricResult:
    value: float
    correct: bool
    defined: bool = True


@dataclass(frozen=True)
class EvaluationRecord:
    class_id: int
    detected: bool
    correct: bool
    image_id: str = ""


@dataclass(frozen=True)
class RecallReport:
    per_class: Dict[int, float] = field(default_factory=dict)
    mean: float = 0.0
    annotated: Dict[int, int] = field(default_factory=dict)


# -- keypoint selection -------------------------------------------------------


def model_diameter(vertices: np.ndarray) -> float:
    """Maximum pairwise vertex distance; the farthest pair always lies on the convex hull."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if len(vertices) < 2:
        raise ValidationError("diameter needs at least two vertices")
    candidates = vertices
    if len(vertices) > 64:
        try:
            candidates = vertices[ConvexHull(vertices).vertices]
        except (QhullError, ValueError):
            candidates = vertices
    return float(np.max(pdist(candidates)))


def fps_keypoints(vertices: np.ndarray, m: int, *, centre: str = "centroid") -> np.ndarray:
    """Farthest point sampling seeded with the object centre.

    Point 0 is the centre (vertex centroid, or bounding-box centre with
    ``centre="bbox"``); every further pick maximises the minimum distance to the
    points chosen so far, ties going to the lowest vertex index.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ShapeError(f"vertices must be N x 3, got {vertices.shape}")
    if m < 1:
        raise ParameterError("keypoint count must be positive")
    if len(np.unique(vertices, axis=0)) < m:
        raise ValidationError(f"need at least {m} distinct vertices for FPS")
    if centre == "centroid":
        origin = vertices.mean(axis=0)
    elif centre == "bbox":
        origin = 0.5 * (vertices.min(axis=0) + vertices.max(axis=0))
    else:
        raise ParameterError(f"unknown centre definition {centre!r}")

    chosen = [origin]
    nearest = np.linalg.norm(vertices - origin, axis=1)
    for _ in range(1, m):
        pick = int(np.argmax(nearest))
        chosen.append(vertices[pick])
        nearest = np.minimum(nearest, np.linalg.norm(vertices - vertices[pick], axis=1))
    return np.array(chosen)


# -- projection ---------------------------------------------------------------


def project(points3d: np.ndarray, pose: PoseEstimate, K: CameraIntrinsics) -> np.ndarray:
    camera = pose.transform(np.asarray(points3d, dtype=np.float64).reshape(-1, 3))
    return _pinhole(camera, K)


def _pinhole(camera: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    bad = np.flatnonzero(~(camera[:, 2] > MIN_DEPTH))
    if len(bad):
        raise ProjectionError(bad)
    z = camera[:, 2]
    return np.stack([K.fx * camera[:, 0] / z + K.cx, K.fy * camera[:, 1] / z + K.cy], axis=1)


def reprojection_errors(points3d: np.ndarray, points2d: np.ndarray, pose: PoseEstimate, K: CameraIntrinsics) -> np.ndarray:
    """Per-point pixel error; points behind the camera get ``inf``."""
    camera = pose.transform(points3d)
    z = camera[:, 2]
    front = z > MIN_DEPTH
    errors = np.full(len(camera), np.inf)
    if np.any(front):
        uv = np.stack(
            [K.fx * camera[front, 0] / z[front] + K.cx, K.fy * camera[front, 1] / z[front] + K.cy],
            axis=1,
        )
        errors[front] = np.linalg.norm(uv - points2d[front], axis=1)
    return errors


def _rmse(errors: np.ndarray) -> float:
    return float(np.sqrt(np.mean(errors**2)))


def rotation_error(R_est: np.ndarray, R_gt: np.ndarray) -> float:
    """Geodesic angle in radians between two rotations."""
    cos = 0.5 * (np.trace(np.asarray(R_est) @ np.asarray(R_gt).T) - 1.0)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def translation_error(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t_est) - np.asarray(t_gt)))


# -- EPnP ---------------------------------------------------------------------


def _as_correspondences(points3d: np.ndarray, points2d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pws = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    uvs = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    if len(pws) != len(uvs):
        raise ShapeError(f"{len(pws)} 3D points but {len(uvs)} 2D points")
    if len(pws) < 4:
        raise ParameterError(f"PnP needs at least 4 correspondences, got {len(pws)}")
    return pws, uvs


def _control_points(pws: np.ndarray) -> np.ndarray:
    """Centroid plus one point per principal axis; only two axes for a planar set."""
    centroid = pws.mean(axis=0)
    centred = pws - centroid
    _, spread, axes = np.linalg.svd(centred.T @ centred)
    if spread[0] <= 0.0 or spread[1] <= _DEGENERATE_SPREAD * spread[0]:
        raise SolverError("degenerate configuration: 3D points are collinear")
    used = 2 if spread[2] <= _DEGENERATE_SPREAD * spread[0] else 3
    scale = np.sqrt(spread[:used] / len(pws))
    return np.vstack([centroid, centroid + scale[:, None] * axes[:used]])


def _barycentric(pws: np.ndarray, cws: np.ndarray) -> np.ndarray:
    basis = (cws[1:] - cws[0]).T
    offsets = (pws - cws[0]).T
    alphas = np.empty((len(pws), len(cws)))
    if len(cws) == 4:
        alphas[:, 1:] = np.linalg.solve(basis, offsets).T
    else:
        # coplanar points lie in the span of the two in-plane axes
        alphas[:, 1:] = np.linalg.lstsq(basis, offsets, rcond=None)[0].T
    alphas[:, 0] = 1.0 - alphas[:, 1:].sum(axis=1)
    return alphas


def _projection_system(alphas: np.ndarray, uvs: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    M = np.zeros((2 * len(alphas), 3 * alphas.shape[1]))
    for j in range(alphas.shape[1]):
        M[0::2, 3 * j] = alphas[:, j] * K.fx
        M[0::2, 3 * j + 2] = alphas[:, j] * (K.cx - uvs[:, 0])
        M[1::2, 3 * j + 1] = alphas[:, j] * K.fy
        M[1::2, 3 * j + 2] = alphas[:, j] * (K.cy - uvs[:, 1])
    return M


def _distance_system(null_space: np.ndarray, cws: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Linearised control-point distance constraints over the products beta_i * beta_j."""
    pairs = list(combinations(range(len(cws)), 2))
    v = null_space.reshape(len(null_space), len(cws), 3)
    dv = np.stack([v[:, a] - v[:, b] for a, b in pairs], axis=1)
    terms = _BETA_TERMS[: _term_count(len(null_space))]
    L = np.stack(
        [(1.0 if i == j else 2.0) * np.einsum("pc,pc->p", dv[i], dv[j]) for i, j in terms],
        axis=1,
    )
    rho = np.array([np.sum((cws[a] - cws[b]) ** 2) for a, b in pairs])
    return L, rho


def _term_count(num_betas: int) -> int:
    return num_betas * (num_betas + 1) // 2


def _two_vector_betas(b: np.ndarray, size: int) -> np.ndarray:
    betas = np.zeros(size)
    if b[0] < 0:
        betas[0] = math.sqrt(-b[0])
        betas[1] = math.sqrt(-b[2]) if b[2] < 0 else 0.0
    else:
        betas[0] = math.sqrt(b[0])
        betas[1] = math.sqrt(b[2]) if b[2] > 0 else 0.0
    if b[1] < 0:
        betas[0] = -betas[0]
    return betas


def _initial_betas(L: np.ndarray, rho: np.ndarray) -> List[np.ndarray]:
    candidates = []

    b = np.linalg.lstsq(L[:, [0, 1, 3, 6]], rho, rcond=None)[0]
    if b[0] < 0:
        root = math.sqrt(-b[0])
        candidates.append(np.array([root, -b[1] / root, -b[2] / root, -b[3] / root]))
    elif b[0] > 0:
        root = math.sqrt(b[0])
        candidates.append(np.array([root, b[1] / root, b[2] / root, b[3] / root]))

    candidates.append(_two_vector_betas(np.linalg.lstsq(L[:, [0, 1, 2]], rho, rcond=None)[0], 4))

    b = np.linalg.lstsq(L[:, [0, 1, 2, 3, 4]], rho, rcond=None)[0]
    betas = _two_vector_betas(b, 4)
    betas[2] = b[3] / betas[0] if betas[0] != 0.0 else 0.0
    candidates.append(betas)
    return candidates


def _initial_planar_betas(L: np.ndarray, rho: np.ndarray) -> List[np.ndarray]:
    # three distance constraints: one and two null vectors are determined, three are not
    b = np.linalg.lstsq(L[:, [0]], rho, rcond=None)[0]
    candidates = [np.array([math.sqrt(abs(b[0])), 0.0, 0.0])]
    candidates.append(_two_vector_betas(np.linalg.lstsq(L[:, [0, 1, 2]], rho, rcond=None)[0], 3))
    return candidates


def _refine_betas(L: np.ndarray, rho: np.ndarray, betas: np.ndarray, iterations: int = 5) -> np.ndarray:
    """Gauss-Newton on the control-point distances."""
    betas = betas.copy()
    terms = _BETA_TERMS[: _term_count(len(betas))]
    for _ in range(iterations):
        quadratic = np.array([betas[i] * betas[j] for i, j in terms])
        residual = rho - L @ quadratic
        jacobian = np.zeros((len(rho), len(betas)))
        for k, (i, j) in enumerate(terms):
            jacobian[:, i] += L[:, k] * betas[j]
            jacobian[:, j] += L[:, k] * betas[i]
        betas = betas + np.linalg.lstsq(jacobian, residual, rcond=None)[0]
    return betas


def _rigid_fit(pws: np.ndarray, pcs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cw = pws.mean(axis=0)
    cc = pcs.mean(axis=0)
    U, _, Vt = np.linalg.svd((pcs - cc).T @ (pws - cw))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    R = U @ D @ Vt
    return R, cc - R @ cw


def epnp(points3d: np.ndarray, points2d: np.ndarray, K: CameraIntrinsics) -> PoseEstimate:
    """Non-iterative PnP through virtual control points.

    Four control points are used in general and three when the 3D points are
    coplanar; collinear points raise :class:`SolverError`. Candidate solutions
    for the leading null-space dimensions are refined with a Gauss-Newton step
    on the control-point distances and the one with the lowest reprojection
    error wins.
    """
    pws, uvs = _as_correspondences(points3d, points2d)
    cws = _control_points(pws)
    planar = len(cws) == 3
    alphas = _barycentric(pws, cws)
    M = _projection_system(alphas, uvs, K)
    _, _, vt = np.linalg.svd(M.T @ M)
    null_space = vt[::-1][: len(cws)]
    L, rho = _distance_system(null_space, cws)

    best: Optional[Tuple[float, np.ndarray, np.ndarray]] = None
    for betas in (_initial_planar_betas if planar else _initial_betas)(L, rho):
        betas = _refine_betas(L, rho, betas)
        ccs = np.einsum("k,kd->d", betas, null_space).reshape(len(cws), 3)
        pcs = alphas @ ccs
        if np.sum(pcs[:, 2]) < 0:
            pcs = -pcs
        if not np.all(np.isfinite(pcs)):
            continue
        R, t = _rigid_fit(pws, pcs)
        errors = reprojection_errors(pws, uvs, PoseEstimate(R, t), K)
        rmse = _rmse(errors)
        if math.isfinite(rmse) and (best is None or rmse < best[0]):
            best = (rmse, R, t)
    if best is None:
        raise SolverError("EPnP produced no finite solution")
    rmse, R, t = best
    return PoseEstimate(R, t, inlier_count=len(pws), reproj_rmse=rmse)


# -- RANSAC + refinement --------------------------------------------------------


def _required_iterations(confidence: float, inlier_ratio: float, sample_size: int, max_iterations: int) -> int:
    failure = 1.0 - inlier_ratio**sample_size
    if failure <= np.finfo(float).eps:
        return 0
    numerator = math.log(max(1.0 - confidence, np.finfo(float).tiny))
    denominator = math.log(failure)
    if denominator >= 0 or -numerator >= max_iterations * -denominator:
        return max_iterations
    return int(round(numerator / denominator))


def refine_pose(
    seed: PoseEstimate,
    points3d: np.ndarray,
    points2d: np.ndarray,
    K: CameraIntrinsics,
    *,
    max_iterations: int = DEFAULT_REFINE_ITERATIONS,
    step_tolerance: float = DEFAULT_STEP_TOLERANCE,
) -> PoseEstimate:
    """Levenberg-Marquardt on the reprojection error, never worse than the seed."""
    pws = np.asarray(points3d, dtype=np.float64)
    uvs = np.asarray(points2d, dtype=np.float64)
    seed_rmse = _rmse(reprojection_errors(pws, uvs, seed, K))

    def residuals(x: np.ndarray) -> np.ndarray:
        camera = pws @ Rotation.from_rotvec(x[:3]).as_matrix().T + x[3:]
        z = np.where(np.abs(camera[:, 2]) > MIN_DEPTH, camera[:, 2], MIN_DEPTH)
        return np.concatenate(
            [K.fx * camera[:, 0] / z + K.cx - uvs[:, 0], K.fy * camera[:, 1] / z + K.cy - uvs[:, 1]]
        )

    x0 = np.concatenate([Rotation.from_matrix(seed.R).as_rotvec(), seed.t])
    solution = least_squares(
        residuals,
        x0,
        method="lm",
        xtol=step_tolerance,
        max_nfev=max_iterations * (len(x0) + 1),
    )
    R = Rotation.from_rotvec(solution.x[:3]).as_matrix()
    refined = PoseEstimate(R, solution.x[3:], inlier_count=len(pws))
    refined_errors = reprojection_errors(pws, uvs, refined, K)
    refined_rmse = _rmse(refined_errors)
    if not refined_rmse <= seed_rmse:
        return PoseEstimate(seed.R, seed.t, inlier_count=len(pws), reproj_rmse=seed_rmse)
    return PoseEstimate(refined.R, refined.t, inlier_count=len(pws), reproj_rmse=refined_rmse)


def ransac_pnp(
    points3d: np.ndarray,
    points2d: np.ndarray,
    K: CameraIntrinsics,
    params: RansacParams = RansacParams(),
) -> Optional[PoseEstimate]:
    """EPnP inside RANSAC followed by iterative refinement on the inliers.

    Returns ``None`` when no hypothesis gathers ``params.min_inliers`` inliers.
    """
    pws, uvs = _as_correspondences(points3d, points2d)
    n = len(pws)
    rng = np.random.default_rng(params.seed)
    best_inliers: Optional[np.ndarray] = None
    best_pose: Optional[PoseEstimate] = None
    needed = params.iterations
    iteration = 0
    while iteration < needed:
        iteration += 1
        sample = rng.choice(n, size=4, replace=False)
        try:
            hypothesis = epnp(pws[sample], uvs[sample], K)
        except (SolverError, np.linalg.LinAlgError):
            continue
        errors = reprojection_errors(pws, uvs, hypothesis, K)
        if not np.all(np.isfinite(errors[sample])):
            continue
        inliers = errors < params.reprojection_threshold
        if best_inliers is None or inliers.sum() > best_inliers.sum():
            best_inliers = inliers
            best_pose = hypothesis
            needed = min(needed, _required_iterations(params.confidence, inliers.sum() / n, 4, params.iterations))
    log.debug("RANSAC stopped after %d of %d iterations", iteration, params.iterations)

    if best_inliers is None or best_pose is None or best_inliers.sum() < params.min_inliers:
        return None

    inlier_pws, inlier_uvs = pws[best_inliers], uvs[best_inliers]
    try:
        pose = epnp(inlier_pws, inlier_uvs, K)
    except (SolverError, np.linalg.LinAlgError):
        log.debug("inlier set is degenerate, keeping the best minimal hypothesis")
        pose = best_pose
    if params.refine:
        pose = refine_pose(
            pose,
            inlier_pws,
            inlier_uvs,
            K,
            max_iterations=params.refine_iterations,
            step_tolerance=params.step_tolerance,
        )
    return PoseEstimate(pose.R, pose.t, inlier_count=int(best_inliers.sum()), reproj_rmse=pose.reproj_rmse)


# -- metrics ------------------------------------------------------------------


def add_metric(pose_est: PoseEstimate, pose_gt: PoseEstimate, model: KeypointModel) -> MetricResult:
    """ADD for asymmetric models, ADD-S (closest transformed gt vertex) for symmetric ones."""
    est = pose_est.transform(model.vertices)
    gt = pose_gt.transform(model.vertices)
    if model.symmetric:
        distances, _ = cKDTree(gt).query(est)
    else:
        distances = np.linalg.norm(est - gt, axis=1)
    value = float(np.mean(distances))
    return MetricResult(value=value, correct=value < ADD_THRESHOLD_FRACTION * model.diameter)


def projection_metric(
    pose_est: PoseEstimate,
    pose_gt: PoseEstimate,
    model: KeypointModel,
    K: CameraIntrinsics,
) -> MetricResult:
    try:
        est = project(model.vertices, pose_est, K)
        gt = project(model.vertices, pose_gt, K)
    except ProjectionError:
        return MetricResult(value=math.inf, correct=False, defined=False)
    value = float(np.mean(np.linalg.norm(est - gt, axis=1)))
    return MetricResult(value=value, correct=value < PROJECTION_THRESHOLD_PX)


def recall_report(results: Iterable[EvaluationRecord]) -> RecallReport:
    """Per-class recall in percent; undetected annotations count as incorrect."""
    annotated: Dict[int, int] = {}
    correct: Dict[int, int] = {}
    for record in results:
        annotated[record.class_id] = annotated.get(record.class_id, 0) + 1
        hit = record.detected and record.correct
        correct[record.class_id] = correct.get(record.class_id, 0) + int(hit)
    per_class = {cid: 100.0 * correct[cid] / annotated[cid] for cid in sorted(annotated)}
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return RecallReport(per_class=per_class, mean=mean, annotated=dict(sorted(annotated.items())))


def pose_from_rotvec(rotvec: Sequence[float], t: Sequence[float]) -> PoseEstimate:
    return PoseEstimate(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix(), np.asarray(t, dtype=np.float64))
