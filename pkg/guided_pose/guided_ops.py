"""Segmentation-guided 3x3 convolution, class-matched 2x upsampling and the NN pyramid.

Guidance masks compare argmax classes (ties to the lowest index) and keep the
neighbour's maximum class probability where the classes agree. Class
membership is treated as constant by every vector-Jacobian product here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ParameterError, ShapeError
from .semantic_norm import FeatureMap, SoftSegmentation

DEFAULT_PYRAMID_LEVELS = 3
MASK_SUM_GUARD = 1e-8

# (dy, dx) neighbour offsets in kernel order; kernel index [dy + 1, dx + 1]
_OFFSETS = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1))
# low-res window search order: top-left first
_WINDOW = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class SegPyramid:
    levels: Tuple[SoftSegmentation, ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


@dataclass(frozen=True, eq=False)
class ConvCotangents:
    x: np.ndarray
    weights: np.ndarray
    seg: np.ndarray


def build_pyramid(seg: SoftSegmentation, n: int = DEFAULT_PYRAMID_LEVELS) -> SegPyramid:
    if n < 1:
        raise ParameterError("pyramid needs at least one down-sampling step")
    height, width = seg.shape
    if height < 2**n or width < 2**n:
        raise ShapeError(f"{height} x {width} segmentation is too small for {n} down-sampling steps")
    levels = [seg]
    for _ in range(n):
        levels.append(SoftSegmentation(levels[-1].probs[::2, ::2]))
    return SegPyramid(tuple(levels))


def _padded(array: np.ndarray, value: float) -> np.ndarray:
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, pad, constant_values=value)


def guidance_masks(seg: SoftSegmentation) -> np.ndarray:
    """All guidance patches at once, shape ``H x W x 3 x 3``."""
    height, width = seg.shape
    labels = seg.labels
    strength = seg.confidence
    padded_labels = _padded(labels, -1)
    padded_strength = _padded(strength, 0.0)
    masks = np.zeros((height, width, 3, 3))
    for dy, dx in _OFFSETS:
        neighbour_labels = padded_labels[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width]
        neighbour_strength = padded_strength[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width]
        masks[:, :, dy + 1, dx + 1] = np.where(neighbour_labels == labels, neighbour_strength, 0.0)
    return masks


def guidance_mask(seg: SoftSegmentation, x: int, y: int) -> np.ndarray:
    """3x3 guidance patch centred on column ``x``, row ``y``; entry ``[dy + 1, dx + 1]``."""
    height, width = seg.shape
    if not (0 <= x < width and 0 <= y < height):
        raise ShapeError(f"pixel ({x}, {y}) lies outside the {height} x {width} segmentation")
    labels = seg.labels
    strength = seg.confidence
    patch = np.zeros((3, 3))
    for dy, dx in _OFFSETS:
        row, col = y + dy, x + dx
        if 0 <= row < height and 0 <= col < width and labels[row, col] == labels[y, x]:
            patch[dy + 1, dx + 1] = strength[row, col]
    return patch


def _patches(x: np.ndarray) -> np.ndarray:
    height, width = x.shape[:2]
    padded = _padded(x, 0.0)
    return np.stack(
        [padded[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width] for dy, dx in _OFFSETS], axis=2
    ).reshape(height, width, 3, 3, x.shape[2])


def _check_conv(x: np.ndarray, weights: np.ndarray, seg: SoftSegmentation) -> None:
    if x.ndim != 3:
        raise ShapeError(f"feature map must be H x W x Cin, got {x.shape}")
    if weights.ndim != 4 or weights.shape[:2] != (3, 3) or weights.shape[2] != x.shape[2]:
        raise ShapeError(f"weights must be 3 x 3 x {x.shape[2]} x Cout, got {weights.shape}")
    if seg.shape != x.shape[:2]:
        raise ShapeError(f"segmentation {seg.shape} does not match features {x.shape[:2]}")


def _renormalisation(masks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    total = masks.sum(axis=(2, 3))
    valid = total >= MASK_SUM_GUARD
    scale = np.where(valid, 9.0 / np.where(valid, total, 1.0), 0.0)
    return scale, total


def object_aware_conv(x: FeatureMap, weights: np.ndarray, seg: SoftSegmentation) -> FeatureMap:
    """3x3 convolution over same-class neighbours, renormalised by ``9 / sum(M)``."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_conv(x, weights, seg)
    masks = guidance_masks(seg)
    scale, _ = _renormalisation(masks)
    masked = _patches(x) * masks[..., None]
    return np.einsum("hwijc,ijco->hwo", masked, weights) * scale[..., None]


def object_aware_conv_vjp(
    x: FeatureMap,
    weights: np.ndarray,
    seg: SoftSegmentation,
    upstream: np.ndarray,
) -> ConvCotangents:
    """Cotangents for x, weights and, through the kept mask magnitudes, the segmentation."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_conv(x, weights, seg)
    height, width = seg.shape
    if upstream.shape != (height, width, weights.shape[3]):
        raise ShapeError(f"upstream must be {(height, width, weights.shape[3])}, got {upstream.shape}")

    masks = guidance_masks(seg)
    scale, total = _renormalisation(masks)
    patches = _patches(x)
    masked = patches * masks[..., None]

    d_weights = np.einsum("hwijc,hwo->ijco", masked * scale[..., None, None, None], upstream)

    # per-tap response to the upstream, shared by the x and mask cotangents
    d_masked = np.einsum("ijco,hwo->hwijc", weights, upstream) * scale[..., None, None, None]
    d_patches = d_masked * masks[..., None]
    padded = np.zeros((height + 2, width + 2, x.shape[2]))
    for dy, dx in _OFFSETS:
        padded[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width] += d_patches[:, :, dy + 1, dx + 1]
    d_x = padded[1:-1, 1:-1]

    response = np.einsum("hwijc,hwijc->hwij", d_masked, patches)
    safe_total = np.where(total >= MASK_SUM_GUARD, total, 1.0)
    weighted = np.sum(response * masks, axis=(2, 3)) / safe_total
    d_masks = response - weighted[..., None, None]
    d_masks = np.where(masks > 0.0, d_masks, 0.0)
    d_masks[total < MASK_SUM_GUARD] = 0.0

    d_strength = np.zeros((height + 2, width + 2))
    for dy, dx in _OFFSETS:
        d_strength[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width] += d_masks[:, :, dy + 1, dx + 1]
    d_seg = np.zeros_like(seg.probs)
    rows, cols = np.indices((height, width))
    d_seg[rows, cols, seg.labels] = d_strength[1:-1, 1:-1]
    return ConvCotangents(x=d_x, weights=d_weights, seg=d_seg)


def _check_upsample(f_low: np.ndarray, pyr: SegPyramid, level: int) -> Tuple[SoftSegmentation, SoftSegmentation]:
    if not 1 <= level <= pyr.depth:
        raise ShapeError(f"level {level} needs pyramid levels {level - 1} and {level}, pyramid depth is {pyr.depth}")
    low, high = pyr.levels[level], pyr.levels[level - 1]
    if f_low.ndim != 3 or f_low.shape[:2] != low.shape:
        raise ShapeError(f"low-res features {f_low.shape} do not match pyramid level {level} {low.shape}")
    return low, high


def upsample_selection(pyr: SegPyramid, level: int) -> Tuple[np.ndarray, np.ndarray]:
    """Source (row, col) in level ``level`` for every pixel of level ``level - 1``.

    Each high-res pixel searches the 2x2 low-res window anchored at half its
    coordinates for the first same-class entry and otherwise takes the anchor.
    """
    low, high = pyr.levels[level], pyr.levels[level - 1]
    low_labels = low.labels
    high_labels = high.labels
    low_h, low_w = low.shape
    rows, cols = np.indices(high.shape)
    anchor_rows, anchor_cols = rows // 2, cols // 2
    src_rows, src_cols = anchor_rows.copy(), anchor_cols.copy()
    found = np.zeros(high.shape, dtype=bool)
    for dr, dc in _WINDOW:
        cand_rows = anchor_rows + dr
        cand_cols = anchor_cols + dc
        inside = (cand_rows < low_h) & (cand_cols < low_w)
        cand_labels = np.full(high.shape, -1)
        cand_labels[inside] = low_labels[cand_rows[inside], cand_cols[inside]]
        take = ~found & inside & (cand_labels == high_labels)
        src_rows[take] = cand_rows[take]
        src_cols[take] = cand_cols[take]
        found |= take
    return src_rows, src_cols


def object_aware_upsample(f_low: FeatureMap, pyr: SegPyramid, level: int) -> FeatureMap:
    """Upsample to the resolution of level ``level - 1`` (2h x 2w for even extents)."""
    f_low = np.asarray(f_low, dtype=np.float64)
    _check_upsample(f_low, pyr, level)
    rows, cols = upsample_selection(pyr, level)
    return f_low[rows, cols]


def object_aware_upsample_vjp(f_low: FeatureMap, pyr: SegPyramid, level: int, upstream: np.ndarray) -> np.ndarray:
    f_low = np.asarray(f_low, dtype=np.float64)
    _, high = _check_upsample(f_low, pyr, level)
    if upstream.shape != high.shape + (f_low.shape[2],):
        raise ShapeError(f"upstream must be {high.shape + (f_low.shape[2],)}, got {upstream.shape}")
    rows, cols = upsample_selection(pyr, level)
    d_low = np.zeros_like(f_low)
    np.add.at(d_low, (rows, cols), upstream)
    return d_low
