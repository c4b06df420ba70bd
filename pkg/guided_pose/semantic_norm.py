"""Class-adaptive (de)normalization driven by a soft segmentation.

Feature maps are ``H x W x Nk`` arrays, segmentations ``H x W x Nc`` with class
0 as background. Forward passes and vector-Jacobian products run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ParameterError, ShapeError, StatisticsError, ValidationError

DEFAULT_TAU = 10.0
DEFAULT_EPS = 1e-5
SUM_TOLERANCE = 1e-5

FeatureMap = np.ndarray


@dataclass(frozen=True, eq=False)
class SoftSegmentation:
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3:
            raise ShapeError(f"segmentation must be H x W x Nc, got shape {probs.shape}")
        if probs.shape[2] < 2:
            raise ShapeError("segmentation needs at least two classes (class 0 is background)")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_labels(cls, labels: np.ndarray, num_classes: int) -> "SoftSegmentation":
        labels = np.asarray(labels)
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
            raise ValidationError(f"labels must lie in [0, {num_classes})")
        return cls(np.eye(num_classes)[labels])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.probs.shape[0], self.probs.shape[1]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def labels(self) -> np.ndarray:
        """Per-pixel argmax class; ties resolve to the lowest class index."""
        return np.argmax(self.probs, axis=2)

    @property
    def confidence(self) -> np.ndarray:
        return np.max(self.probs, axis=2)

    def validate(self) -> "SoftSegmentation":
        if not np.all(np.isfinite(self.probs)) or np.any(self.probs < 0.0):
            raise ValidationError("segmentation probabilities must be finite and non-negative")
        if np.max(np.abs(self.probs.sum(axis=2) - 1.0), initial=0.0) > SUM_TOLERANCE:
            raise ValidationError("segmentation class vectors must sum to 1")
        return self


@dataclass(frozen=True, eq=False)
class ModulationTable:
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if gamma.ndim != 2 or gamma.shape != beta.shape:
            raise ShapeError(f"gamma and beta must share Nc x Nk dims, got {gamma.shape} and {beta.shape}")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise ValidationError("modulation tables must be finite")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def initial(cls, num_classes: int, channels: int) -> "ModulationTable":
        return cls(np.ones((num_classes, channels)), np.zeros((num_classes, channels)))

    @property
    def num_classes(self) -> int:
        return self.gamma.shape[0]

    @property
    def channels(self) -> int:
        return self.gamma.shape[1]

    @property
    def num_parameters(self) -> int:
        return self.gamma.size + self.beta.size

    def with_added_class(self) -> "ModulationTable":
        """Append one identity-initialised row (scale 1, shift 0)."""
        return ModulationTable(
            np.vstack([self.gamma, np.ones((1, self.channels))]),
            np.vstack([self.beta, np.zeros((1, self.channels))]),
        )


@dataclass(frozen=True, eq=False)
class CladeCotangents:
    x: np.ndarray
    gamma_bar: np.ndarray
    beta_bar: np.ndarray
    seg: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray


def temperature_softmax(raw: np.ndarray, tau: float = DEFAULT_TAU) -> SoftSegmentation:
    if not tau > 0.0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    logits = tau * np.asarray(raw, dtype=np.float64)
    logits = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(logits)
    return SoftSegmentation(exp / exp.sum(axis=-1, keepdims=True))


def temperature_softmax_vjp(seg: SoftSegmentation, upstream: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Cotangent of the raw logits given the softmax output and its cotangent."""
    s = seg.probs
    if upstream.shape != s.shape:
        raise ShapeError(f"upstream shape {upstream.shape} does not match segmentation {s.shape}")
    return tau * s * (upstream - np.sum(upstream * s, axis=-1, keepdims=True))


def guided_sample(seg: SoftSegmentation, table: ModulationTable) -> Tuple[FeatureMap, FeatureMap]:
    """Per-pixel modulation maps: the class-probability dot product with each table column."""
    if seg.num_classes != table.num_classes:
        raise ShapeError(f"segmentation has {seg.num_classes} classes, table has {table.num_classes}")
    gamma_bar = np.einsum("hwl,lk->hwk", seg.probs, table.gamma)
    beta_bar = np.einsum("hwl,lk->hwk", seg.probs, table.beta)
    return gamma_bar, beta_bar


def guided_sample_vjp(
    seg: SoftSegmentation,
    table: ModulationTable,
    d_gamma_bar: np.ndarray,
    d_beta_bar: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns cotangents for (segmentation probabilities, gamma table, beta table)."""
    expected = seg.shape + (table.channels,)
    if d_gamma_bar.shape != expected or d_beta_bar.shape != expected:
        raise ShapeError(f"modulation cotangents must be {expected}")
    d_seg = np.einsum("hwk,lk->hwl", d_gamma_bar, table.gamma) + np.einsum("hwk,lk->hwl", d_beta_bar, table.beta)
    d_gamma = np.einsum("hwl,hwk->lk", seg.probs, d_gamma_bar)
    d_beta = np.einsum("hwl,hwk->lk", seg.probs, d_beta_bar)
    return d_seg, d_gamma, d_beta


def _instance_statistics(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    height, width, channels = x.shape
    if height * width < 2:
        raise StatisticsError("instance statistics need at least two spatial positions")
    # channel-major contiguous rows so numpy reduces each channel with pairwise summation
    flat = np.ascontiguousarray(x.reshape(-1, channels).T)
    count = flat.shape[1]
    mean = flat.sum(axis=1) / count
    var = ((flat - mean[:, None]) ** 2).sum(axis=1) / count
    return mean, var


def _check_feature_shapes(x: np.ndarray, *others: np.ndarray) -> None:
    if x.ndim != 3:
        raise ShapeError(f"feature map must be H x W x Nk, got shape {x.shape}")
    for other in others:
        if other.shape != x.shape:
            raise ShapeError(f"shape {other.shape} does not match feature map {x.shape}")


def clade_normalize(
    x: FeatureMap,
    gamma_bar: FeatureMap,
    beta_bar: FeatureMap,
    eps: float = DEFAULT_EPS,
) -> FeatureMap:
    x = np.asarray(x, dtype=np.float64)
    _check_feature_shapes(x, gamma_bar, beta_bar)
    mean, var = _instance_statistics(x)
    return gamma_bar * (x - mean) / np.sqrt(var + eps) + beta_bar


def clade_normalize_vjp(
    x: FeatureMap,
    gamma_bar: FeatureMap,
    upstream: np.ndarray,
    eps: float = DEFAULT_EPS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns cotangents for (x, gamma_bar, beta_bar)."""
    x = np.asarray(x, dtype=np.float64)
    _check_feature_shapes(x, gamma_bar, upstream)
    mean, var = _instance_statistics(x)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    d_x_hat = upstream * gamma_bar
    spatial = (0, 1)
    d_x = inv_std * (
        d_x_hat
        - d_x_hat.mean(axis=spatial, keepdims=True)
        - x_hat * (d_x_hat * x_hat).mean(axis=spatial, keepdims=True)
    )
    return d_x, upstream * x_hat, np.array(upstream, dtype=np.float64)


def clade_forward(
    x: FeatureMap,
    seg: SoftSegmentation,
    table: ModulationTable,
    eps: float = DEFAULT_EPS,
) -> FeatureMap:
    gamma_bar, beta_bar = guided_sample(seg, table)
    return clade_normalize(x, gamma_bar, beta_bar, eps)


def clade_vjp(
    x: FeatureMap,
    seg: SoftSegmentation,
    table: ModulationTable,
    upstream: np.ndarray,
    eps: float = DEFAULT_EPS,
) -> CladeCotangents:
    """Vector-Jacobian product of ``clade_normalize(x, *guided_sample(seg, table))``."""
    gamma_bar, _ = guided_sample(seg, table)
    d_x, d_gamma_bar, d_beta_bar = clade_normalize_vjp(x, gamma_bar, upstream, eps)
    d_seg, d_gamma, d_beta = guided_sample_vjp(seg, table, d_gamma_bar, d_beta_bar)
    return CladeCotangents(
        x=d_x,
        gamma_bar=d_gamma_bar,
        beta_bar=d_beta_bar,
        seg=d_seg,
        gamma=d_gamma,
        beta=d_beta,
    )
