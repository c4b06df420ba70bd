"""Training losses: segmentation cross-entropy, smooth-l1 vector loss, proxy voting
loss, keypoint loss and their weighted total, each with its vector-Jacobian product.

Vector and keypoint terms are only supervised where the predicted class
matches the ground-truth foreground class (see ``supervision_mask``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Dict, Mapping, Optional, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .dkr import Keypoints2D
from .errors import NumericError, ParameterError, ShapeError, ValidationError

SMOOTH_L1_DELTA = 1.0

KeypointsLike = Union[Keypoints2D, np.ndarray]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.015
    lambda4: float = 0.007

    def __post_init__(self) -> None:
        for item in fields(self):
            value = getattr(self, item.name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ParameterError(f"{item.name} must be a finite non-negative weight, got {value}")

    @classmethod
    def tuned(cls) -> "LossWeights":
        """Variant with the keypoint term raised to 0.01."""
        return cls(lambda4=0.01)


@dataclass(frozen=True)
class LossParts:
    seg: float
    vec: float
    pv: float
    key: float
    conf_reg: Optional[float] = None


def smooth_l1(x: np.ndarray, delta: float = SMOOTH_L1_DELTA) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < delta, 0.5 * ax * ax / delta, ax - 0.5 * delta)


def smooth_l1_grad(x: np.ndarray, delta: float = SMOOTH_L1_DELTA) -> np.ndarray:
    return np.clip(x / delta, -1.0, 1.0)


def supervision_mask(pred_labels: np.ndarray, gt_labels: np.ndarray) -> np.ndarray:
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(f"label maps differ in shape: {pred_labels.shape} vs {gt_labels.shape}")
    return (pred_labels == gt_labels) & (gt_labels > 0)


# -- segmentation -------------------------------------------------------------


def _check_labels(logits: np.ndarray, gt_labels: np.ndarray) -> np.ndarray:
    gt_labels = np.asarray(gt_labels)
    if logits.ndim != 3 or gt_labels.shape != logits.shape[:2]:
        raise ShapeError(f"logits {logits.shape} and labels {gt_labels.shape} do not align")
    if gt_labels.size and (gt_labels.min() < 0 or gt_labels.max() >= logits.shape[2]):
        raise ValidationError(f"labels must lie in [0, {logits.shape[2]})")
    return gt_labels.astype(np.int64)


def seg_loss(logits: np.ndarray, gt_labels: np.ndarray) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(logits, gt_labels)
    if labels.size == 0:
        return 0.0
    picked = np.take_along_axis(logits, labels[..., None], axis=2)[..., 0]
    return float(np.mean(logsumexp(logits, axis=2) - picked))


def seg_loss_vjp(logits: np.ndarray, gt_labels: np.ndarray, upstream: float = 1.0) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(logits, gt_labels)
    if labels.size == 0:
        return np.zeros_like(logits)
    grad = softmax(logits, axis=2)
    grad -= np.eye(logits.shape[2])[labels]
    return grad * (upstream / labels.size)


# -- vector field -------------------------------------------------------------


def _check_fields(pred: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if pred.ndim != 3 or pred.shape[2] % 2 or mask.shape != pred.shape[:2]:
        raise ShapeError(f"field {pred.shape} and mask {mask.shape} do not align")
    return mask


def vector_loss(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = _check_fields(pred, mask)
    if gt.shape != pred.shape:
        raise ShapeError(f"predicted {pred.shape} and target {gt.shape} fields differ")
    if not mask.any():
        return 0.0
    return float(np.mean(smooth_l1(pred[mask] - gt[mask])))


def vector_loss_vjp(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, upstream: float = 1.0) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = _check_fields(pred, mask)
    grad = np.zeros_like(pred)
    if mask.any():
        diff = pred[mask] - gt[mask]
        grad[mask] = smooth_l1_grad(diff) * (upstream / diff.size)
    return grad


# -- proxy voting -------------------------------------------------------------


def _proxy_geometry(pred, gt_keypoints, mask, labels):
    pred = np.asarray(pred, dtype=np.float64)
    mask = _check_fields(pred, mask)
    labels = np.asarray(labels)
    if labels.shape != mask.shape:
        raise ShapeError(f"label map {labels.shape} does not match mask {mask.shape}")
    m = pred.shape[2] // 2
    ys, xs = np.nonzero(mask)
    targets = np.empty((len(ys), m, 2))
    for class_id in np.unique(labels[ys, xs]):
        if int(class_id) not in gt_keypoints:
            raise ValidationError(f"no ground-truth keypoints for supervised class {int(class_id)}")
        points = _points(gt_keypoints[int(class_id)])
        if points.shape != (m, 2):
            raise ShapeError(f"class {int(class_id)} keypoints must be {m} x 2, got {points.shape}")
        targets[labels[ys, xs] == class_id] = points
    vectors = pred[ys, xs].reshape(-1, m, 2)
    offsets = targets - np.stack([xs, ys], axis=1)[:, None, :]
    return pred, ys, xs, vectors, offsets


def _perpendicular(vectors: np.ndarray, offsets: np.ndarray):
    cross = vectors[..., 0] * offsets[..., 1] - vectors[..., 1] * offsets[..., 0]
    norms = np.linalg.norm(vectors, axis=-1)
    safe = np.where(norms > 0.0, norms, 1.0)
    distance = np.where(norms > 0.0, np.abs(cross) / safe, 0.0)
    return cross, safe, distance


def proxy_voting_loss(
    pred: np.ndarray,
    gt_keypoints: Mapping[int, KeypointsLike],
    mask: np.ndarray,
    labels: np.ndarray,
) -> float:
    """Smooth-l1 of the distance from each true keypoint to the pixel's predicted line."""
    _, ys, _, vectors, offsets = _proxy_geometry(pred, gt_keypoints, mask, labels)
    if len(ys) == 0:
        return 0.0
    _, _, distance = _perpendicular(vectors, offsets)
    return float(np.mean(smooth_l1(distance)))


def proxy_voting_loss_vjp(
    pred: np.ndarray,
    gt_keypoints: Mapping[int, KeypointsLike],
    mask: np.ndarray,
    labels: np.ndarray,
    upstream: float = 1.0,
) -> np.ndarray:
    pred, ys, xs, vectors, offsets = _proxy_geometry(pred, gt_keypoints, mask, labels)
    grad = np.zeros_like(pred)
    if len(ys) == 0:
        return grad
    cross, norms, distance = _perpendicular(vectors, offsets)
    outer = smooth_l1_grad(distance) * (upstream / distance.size)
    sign = np.sign(cross) / norms
    spread = (np.abs(cross) / norms**3)[..., None] * vectors
    d_vectors = np.stack([sign * offsets[..., 1], -sign * offsets[..., 0]], axis=-1) - spread
    grad[ys, xs] = (outer[..., None] * d_vectors).reshape(len(ys), -1)
    return grad


# -- keypoints ----------------------------------------------------------------


def _points(value: KeypointsLike) -> np.ndarray:
    if isinstance(value, Keypoints2D):
        return value.points
    return np.asarray(value, dtype=np.float64)


def _paired_classes(pred: Mapping[int, KeypointsLike], gt: Mapping[int, KeypointsLike]):
    """(class, prediction, ground truth, finite rows) for every class that has usable keypoints."""
    pairs = []
    for class_id in sorted(pred):
        if class_id not in gt:
            raise ValidationError(f"class {class_id} has predicted keypoints but no ground truth")
        if isinstance(pred[class_id], Keypoints2D) and pred[class_id].absent:
            continue
        p, g = _points(pred[class_id]), _points(gt[class_id])
        if p.shape != g.shape:
            raise ShapeError(f"class {class_id}: keypoint shapes {p.shape} and {g.shape} differ")
        # a vanished-confidence solve leaves NaN points; those keypoints carry no loss
        rows = np.all(np.isfinite(p), axis=1)
        if rows.any():
            pairs.append((class_id, p, g, rows))
    return pairs


def keypoint_loss(pred: Mapping[int, KeypointsLike], gt: Mapping[int, KeypointsLike]) -> float:
    pairs = _paired_classes(pred, gt)
    if not pairs:
        return 0.0
    per_class = [np.mean(np.linalg.norm(p[rows] - g[rows], axis=1)) for _, p, g, rows in pairs]
    return float(np.mean(smooth_l1(np.asarray(per_class))))


def keypoint_loss_vjp(
    pred: Mapping[int, KeypointsLike],
    gt: Mapping[int, KeypointsLike],
    upstream: float = 1.0,
) -> Dict[int, np.ndarray]:
    pairs = _paired_classes(pred, gt)
    grads: Dict[int, np.ndarray] = {}
    for class_id, p, g, rows in pairs:
        diff = p[rows] - g[rows]
        norms = np.linalg.norm(diff, axis=1)
        mean = float(np.mean(norms))
        units = np.where(norms[:, None] > 0.0, diff / np.where(norms > 0.0, norms, 1.0)[:, None], 0.0)
        scale = upstream * float(smooth_l1_grad(mean)) / (len(pairs) * len(diff))
        grads[class_id] = np.zeros_like(p)
        grads[class_id][rows] = units * scale
    return grads


def total_loss(parts: LossParts, weights: LossWeights = LossWeights()) -> float:
    terms = [
        ("seg", weights.lambda1),
        ("vec", weights.lambda2),
        ("pv", weights.lambda3),
        ("key", weights.lambda4),
    ]
    total = 0.0
    for name, coefficient in terms:
        value = float(getattr(parts, name))
        if not math.isfinite(value):
            raise NumericError(name, value)
        total += coefficient * value
    if parts.conf_reg is not None:
        if not math.isfinite(parts.conf_reg):
            raise NumericError("conf_reg", parts.conf_reg)
        total += float(parts.conf_reg)
    return total
