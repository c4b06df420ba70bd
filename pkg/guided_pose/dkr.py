"""Differentiable keypoint regression.

Every pixel of a class region contributes, per keypoint, the line through the
pixel along its predicted direction. The keypoint is the confidence-weighted
least-squares intersection of those lines, solved through the 2x2 normal
matrix with a pseudoinverse. Gradients follow the implicit-function form of
``x* = N^-1 r`` and are always computed in float64.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.special import expit

from .errors import DegenerateWeightsError, EmptySystemError, ShapeError

log = logging.getLogger(__name__)

CONFIDENCE_TARGET = 0.7
RANK_TOLERANCE = 1e-10
SOFTPLUS_LINEAR_FROM = 20.0


@dataclass(frozen=True, eq=False)
class RegionSystem:
    """Rows of one (class, keypoint) system; pixels are ``[x, y]``."""

    pixels: np.ndarray
    raw_directions: np.ndarray
    directions: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    keypoint: int = 0

    @property
    def rows(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class SolveDiagnostics:
    rank: int
    eigenvalues: Tuple[float, float]
    condition: float
    rows: int
    total_weight: float

    @property
    def valid(self) -> bool:
        return self.rank == 2


@dataclass(frozen=True, eq=False)
class Keypoints2D:
    points: np.ndarray
    valid: np.ndarray
    diagnostics: Tuple[Optional[SolveDiagnostics], ...] = ()
    absent: bool = False

    @classmethod
    def missing(cls, m: int) -> "Keypoints2D":
        return cls(np.full((m, 2), np.nan), np.zeros(m, dtype=bool), (None,) * m, absent=True)

    @property
    def num_keypoints(self) -> int:
        return len(self.points)

    @property
    def num_valid(self) -> int:
        return int(np.count_nonzero(self.valid))


@dataclass(frozen=True, eq=False)
class RowCotangents:
    weights: np.ndarray
    normals: np.ndarray
    raw_directions: np.ndarray


def softplus_weights(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    linear = raw > SOFTPLUS_LINEAR_FROM
    low = np.log1p(np.exp(np.minimum(raw, SOFTPLUS_LINEAR_FROM)))
    high = raw + np.log1p(np.exp(-np.maximum(raw, SOFTPLUS_LINEAR_FROM)))
    return np.where(linear, high, low)


def _check_stacks(field: np.ndarray, raw_conf: np.ndarray) -> int:
    if raw_conf.ndim != 3 or field.ndim != 3:
        raise ShapeError(f"field and confidences must be H x W x C, got {field.shape} and {raw_conf.shape}")
    m = raw_conf.shape[2]
    if field.shape != raw_conf.shape[:2] + (2 * m,):
        raise ShapeError(f"field must be H x W x {2 * m} for {m} confidence maps, got {field.shape}")
    return m


def assemble_system(
    region: np.ndarray,
    field: np.ndarray,
    weights: np.ndarray,
    keypoint: int,
) -> RegionSystem:
    """Build the line system of one keypoint over ``region`` (N x 2 ``[x, y]`` pixels).

    ``weights`` are the already-activated confidences (H x W x m). A zero
    direction vector yields a zero row.
    """
    pixels = np.asarray(region, dtype=np.int64).reshape(-1, 2)
    if len(pixels) == 0:
        raise EmptySystemError(f"keypoint {keypoint}: region holds no pixels")
    xs, ys = pixels[:, 0], pixels[:, 1]
    raw = np.asarray(field[ys, xs, 2 * keypoint : 2 * keypoint + 2], dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    directions = np.where(norms[:, None] > 0.0, raw / safe[:, None], 0.0)
    normals = np.stack([-directions[:, 1], directions[:, 0]], axis=1)
    positions = pixels.astype(np.float64)
    offsets = np.sum(normals * positions, axis=1)
    return RegionSystem(
        pixels=positions,
        raw_directions=raw,
        directions=directions,
        normals=normals,
        offsets=offsets,
        weights=np.asarray(weights[ys, xs, keypoint], dtype=np.float64),
        keypoint=keypoint,
    )


def _normal_equations(system: RegionSystem) -> Tuple[np.ndarray, np.ndarray]:
    weighted = system.normals * system.weights[:, None]
    return weighted.T @ system.normals, weighted.T @ system.offsets


def solve_keypoint(system: RegionSystem) -> Tuple[np.ndarray, SolveDiagnostics]:
    """Minimum-norm weighted least-squares intersection and its rank diagnostics."""
    total_weight = float(np.sum(system.weights))
    if not total_weight > 0.0:
        raise DegenerateWeightsError(f"keypoint {system.keypoint}: all {system.rows} row weights are zero")
    normal_matrix, rhs = _normal_equations(system)
    eigenvalues, eigenvectors = np.linalg.eigh(normal_matrix)
    largest = float(eigenvalues[-1])
    keep = eigenvalues > RANK_TOLERANCE * largest if largest > 0.0 else np.zeros(2, dtype=bool)
    inverse = np.where(keep, 1.0 / np.where(keep, eigenvalues, 1.0), 0.0)
    point = eigenvectors @ (inverse * (eigenvectors.T @ rhs))
    smallest = float(eigenvalues[0])
    diagnostics = SolveDiagnostics(
        rank=int(np.count_nonzero(keep)),
        eigenvalues=(smallest, largest),
        condition=largest / smallest if smallest > RANK_TOLERANCE * largest and smallest > 0.0 else float("inf"),
        rows=system.rows,
        total_weight=total_weight,
    )
    return point, diagnostics


def solve_keypoint_vjp(system: RegionSystem, cotangent: np.ndarray) -> RowCotangents:
    """Row cotangents of a full-rank solve; a low-rank system contributes zeros."""
    g = np.asarray(cotangent, dtype=np.float64).reshape(2)
    zeros = RowCotangents(np.zeros(system.rows), np.zeros((system.rows, 2)), np.zeros((system.rows, 2)))
    point, diagnostics = solve_keypoint(system)
    if not diagnostics.valid or not np.any(g):
        return zeros
    normal_matrix, _ = _normal_equations(system)
    lam = np.linalg.solve(normal_matrix, g)

    n = system.normals
    w = system.weights
    lam_n = n @ lam
    residual = system.offsets - n @ point
    d_weights = lam_n * residual
    d_normals = w[:, None] * (residual[:, None] * lam[None, :] + lam_n[:, None] * (system.pixels - point))

    # n = (-d_y, d_x)
    d_directions = np.stack([d_normals[:, 1], -d_normals[:, 0]], axis=1)
    norms = np.linalg.norm(system.raw_directions, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    d = system.directions
    along = np.sum(d * d_directions, axis=1)
    d_raw = np.where(norms[:, None] > 0.0, (d_directions - d * along[:, None]) / safe[:, None], 0.0)
    return RowCotangents(weights=d_weights, normals=d_normals, raw_directions=d_raw)


def region_pixels(mask: np.ndarray) -> np.ndarray:
    """Row-major ``[x, y]`` coordinates of a boolean mask."""
    return np.argwhere(np.asarray(mask, dtype=bool))[:, ::-1].astype(np.int64)


def solve_region(pixels: np.ndarray, field: np.ndarray, weights: np.ndarray) -> Keypoints2D:
    m = weights.shape[2]
    if len(pixels) == 0:
        return Keypoints2D.missing(m)
    points = np.full((m, 2), np.nan)
    valid = np.zeros(m, dtype=bool)
    diagnostics = []
    for k in range(m):
        system = assemble_system(pixels, field, weights, k)
        try:
            point, diag = solve_keypoint(system)
        except DegenerateWeightsError:
            log.debug("keypoint %d: confidences vanished on all %d rows", k, system.rows)
            diagnostics.append(None)
            continue
        points[k] = point
        valid[k] = diag.valid
        diagnostics.append(diag)
    return Keypoints2D(points=points, valid=valid, diagnostics=tuple(diagnostics))


def dkr_forward(
    region_masks: Mapping[int, np.ndarray],
    field: np.ndarray,
    raw_conf: np.ndarray,
) -> Dict[int, Keypoints2D]:
    """Keypoints for every class of ``region_masks`` (class id -> H x W boolean mask)."""
    field = np.asarray(field, dtype=np.float64)
    raw_conf = np.asarray(raw_conf, dtype=np.float64)
    _check_stacks(field, raw_conf)
    weights = softplus_weights(raw_conf)
    results: Dict[int, Keypoints2D] = {}
    for class_id in sorted(region_masks):
        mask = np.asarray(region_masks[class_id], dtype=bool)
        if mask.shape != raw_conf.shape[:2]:
            raise ShapeError(f"class {class_id} mask {mask.shape} does not match {raw_conf.shape[:2]}")
        pixels = region_pixels(mask)
        if len(pixels) == 0:
            log.debug("class %d has an empty region", class_id)
        results[class_id] = solve_region(pixels, field, weights)
    return results


def dkr_vjp(
    region_masks: Mapping[int, np.ndarray],
    field: np.ndarray,
    raw_conf: np.ndarray,
    upstream: Mapping[int, np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """Cotangents for (field, raw_conf) given per-class m x 2 keypoint cotangents."""
    field = np.asarray(field, dtype=np.float64)
    raw_conf = np.asarray(raw_conf, dtype=np.float64)
    m = _check_stacks(field, raw_conf)
    weights = softplus_weights(raw_conf)
    slope = expit(raw_conf)
    d_field = np.zeros_like(field)
    d_raw = np.zeros_like(raw_conf)
    for class_id in sorted(upstream):
        if class_id not in region_masks:
            continue
        g = np.asarray(upstream[class_id], dtype=np.float64).reshape(m, 2)
        pixels = region_pixels(region_masks[class_id])
        if len(pixels) == 0:
            continue
        xs, ys = pixels[:, 0], pixels[:, 1]
        for k in range(m):
            system = assemble_system(pixels, field, weights, k)
            try:
                rows = solve_keypoint_vjp(system, g[k])
            except DegenerateWeightsError:
                continue
            d_field[ys, xs, 2 * k : 2 * k + 2] += rows.raw_directions
            d_raw[ys, xs, k] += rows.weights * slope[ys, xs, k]
    return d_field, d_raw


def confidence_regularizer(
    raw_conf: np.ndarray,
    foreground: np.ndarray,
    target: float = CONFIDENCE_TARGET,
) -> float:
    """Sum over maps of ``|mean softplus weight over the foreground - target|``."""
    raw_conf = np.asarray(raw_conf, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=bool)
    if foreground.shape != raw_conf.shape[:2]:
        raise ShapeError(f"foreground mask {foreground.shape} does not match {raw_conf.shape[:2]}")
    if not foreground.any():
        return 0.0
    means = softplus_weights(raw_conf[foreground]).mean(axis=0)
    return float(np.sum(np.abs(means - target)))


def confidence_regularizer_vjp(
    raw_conf: np.ndarray,
    foreground: np.ndarray,
    upstream: float = 1.0,
    target: float = CONFIDENCE_TARGET,
) -> np.ndarray:
    raw_conf = np.asarray(raw_conf, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=bool)
    d_raw = np.zeros_like(raw_conf)
    count = int(np.count_nonzero(foreground))
    if count == 0:
        return d_raw
    selected = raw_conf[foreground]
    signs = np.sign(softplus_weights(selected).mean(axis=0) - target)
    d_raw[foreground] = upstream * signs[None, :] * expit(selected) / count
    return d_raw
