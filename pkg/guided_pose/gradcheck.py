"""Central finite-difference checks of every analytic vector-Jacobian product.

Each case draws a small seeded float64 instance away from the kinks of the
piecewise terms (smooth-l1 transitions, absolute values, argmax changes) and
compares ``<upstream, d forward>`` against the VJP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from . import dkr, guided_ops, losses, semantic_norm
from .errors import ParameterError
from .semantic_norm import ModulationTable, SoftSegmentation

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
DEFAULT_TOLERANCE = 1e-4
DEFAULT_INSTANCES = 10
CORRUPTION_FACTOR = 1.01

Inputs = Dict[str, np.ndarray]


@dataclass(frozen=True)
class GradCase:
    inputs: Inputs
    evaluate: Callable[[], float]
    analytic: Callable[[], Inputs]


@dataclass(frozen=True)
class KernelReport:
    name: str
    group: str
    instances: int
    max_relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


@dataclass(frozen=True)
class GradcheckReport:
    kernels: Tuple[KernelReport, ...]

    @property
    def passed(self) -> bool:
        return all(k.passed for k in self.kernels)

    @property
    def failed(self) -> Tuple[str, ...]:
        return tuple(k.name for k in self.kernels if not k.passed)


def numerical_gradient(evaluate: Callable[[], float], array: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of ``evaluate`` w.r.t. ``array``, perturbed in place and restored."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = evaluate()
        flat[i] = original - step
        minus = evaluate()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def check_case(case: GradCase, step: float = DEFAULT_STEP, corrupt: bool = False) -> float:
    analytic = case.analytic()
    names = sorted(case.inputs)
    numeric = [numerical_gradient(case.evaluate, case.inputs[name], step) for name in names]
    stacked_analytic = np.concatenate([np.ravel(analytic[name]) for name in names])
    if corrupt:
        stacked_analytic = stacked_analytic * CORRUPTION_FACTOR
    return relative_error(stacked_analytic, np.concatenate([g.ravel() for g in numeric]))


# -- instances ----------------------------------------------------------------


def _soft_labels(rng: np.random.Generator, shape: Tuple[int, int], num_classes: int) -> np.ndarray:
    labels = rng.integers(0, num_classes, size=shape)
    logits = 2.5 * np.eye(num_classes)[labels] + 0.3 * rng.normal(size=shape + (num_classes,))
    return softmax(logits, axis=2)


def _safe_offsets(rng: np.random.Generator, size) -> np.ndarray:
    # magnitudes stay clear of zero and of the smooth-l1 transition at 1
    magnitude = np.where(rng.random(size) < 0.5, rng.uniform(0.1, 0.8, size), rng.uniform(1.3, 2.5, size))
    return magnitude * rng.choice([-1.0, 1.0], size=size)


def _temperature_softmax_case(rng: np.random.Generator) -> GradCase:
    raw = 0.05 * rng.normal(size=(3, 4, 3))
    upstream = rng.normal(size=raw.shape)

    def evaluate() -> float:
        return float(np.sum(upstream * semantic_norm.temperature_softmax(raw).probs))

    def analytic() -> Inputs:
        seg = semantic_norm.temperature_softmax(raw)
        return {"raw": semantic_norm.temperature_softmax_vjp(seg, upstream)}

    return GradCase({"raw": raw}, evaluate, analytic)


def _clade_case(rng: np.random.Generator) -> GradCase:
    height, width, channels, classes = 4, 5, 3, 3
    inputs = {
        "x": rng.normal(size=(height, width, channels)),
        "seg": _soft_labels(rng, (height, width), classes),
        "gamma": 1.0 + 0.3 * rng.normal(size=(classes, channels)),
        "beta": rng.normal(size=(classes, channels)),
    }
    upstream = rng.normal(size=(height, width, channels))

    def evaluate() -> float:
        table = ModulationTable(inputs["gamma"], inputs["beta"])
        out = semantic_norm.clade_forward(inputs["x"], SoftSegmentation(inputs["seg"]), table)
        return float(np.sum(upstream * out))

    def analytic() -> Inputs:
        table = ModulationTable(inputs["gamma"], inputs["beta"])
        c = semantic_norm.clade_vjp(inputs["x"], SoftSegmentation(inputs["seg"]), table, upstream)
        return {"x": c.x, "seg": c.seg, "gamma": c.gamma, "beta": c.beta}

    return GradCase(inputs, evaluate, analytic)


def _conv_case(rng: np.random.Generator) -> GradCase:
    height, width = 5, 5
    inputs = {
        "x": rng.normal(size=(height, width, 2)),
        "weights": 0.5 * rng.normal(size=(3, 3, 2, 2)),
        "seg": _soft_labels(rng, (height, width), 3),
    }
    upstream = rng.normal(size=(height, width, 2))

    def evaluate() -> float:
        out = guided_ops.object_aware_conv(inputs["x"], inputs["weights"], SoftSegmentation(inputs["seg"]))
        return float(np.sum(upstream * out))

    def analytic() -> Inputs:
        c = guided_ops.object_aware_conv_vjp(inputs["x"], inputs["weights"], SoftSegmentation(inputs["seg"]), upstream)
        return {"x": c.x, "weights": c.weights, "seg": c.seg}

    return GradCase(inputs, evaluate, analytic)


def _upsample_case(rng: np.random.Generator) -> GradCase:
    pyr = guided_ops.build_pyramid(SoftSegmentation(_soft_labels(rng, (8, 8), 3)), 1)
    f_low = rng.normal(size=(4, 4, 3))
    upstream = rng.normal(size=(8, 8, 3))

    def evaluate() -> float:
        return float(np.sum(upstream * guided_ops.object_aware_upsample(f_low, pyr, 1)))

    def analytic() -> Inputs:
        return {"f_low": guided_ops.object_aware_upsample_vjp(f_low, pyr, 1, upstream)}

    return GradCase({"f_low": f_low}, evaluate, analytic)


def _dkr_case(rng: np.random.Generator) -> GradCase:
    size, m = 4, 2
    mask = np.zeros((size, size), dtype=bool)
    mask.reshape(-1)[rng.choice(size * size, size=6, replace=False)] = True
    field = rng.normal(size=(size, size, 2 * m))
    ys, xs = np.nonzero(mask)
    for k in range(m):
        target = np.array([rng.uniform(5.0, 7.0), rng.uniform(-1.0, 4.0)])
        angle = np.arctan2(target[1] - ys, target[0] - xs) + rng.normal(scale=0.2, size=len(ys))
        length = rng.uniform(0.5, 1.5, size=len(ys))
        field[ys, xs, 2 * k] = length * np.cos(angle)
        field[ys, xs, 2 * k + 1] = length * np.sin(angle)
    inputs = {"field": field, "raw_conf": rng.normal(size=(size, size, m))}
    upstream = {1: rng.normal(size=(m, 2))}

    def evaluate() -> float:
        points = dkr.dkr_forward({1: mask}, inputs["field"], inputs["raw_conf"])[1].points
        return float(np.sum(upstream[1] * points))

    def analytic() -> Inputs:
        d_field, d_raw = dkr.dkr_vjp({1: mask}, inputs["field"], inputs["raw_conf"], upstream)
        return {"field": d_field, "raw_conf": d_raw}

    return GradCase(inputs, evaluate, analytic)


def _confidence_regularizer_case(rng: np.random.Generator) -> GradCase:
    while True:
        raw = rng.normal(size=(4, 4, 3))
        foreground = rng.random((4, 4)) < 0.6
        if foreground.sum() < 4:
            continue
        means = dkr.softplus_weights(raw[foreground]).mean(axis=0)
        if np.all(np.abs(means - dkr.CONFIDENCE_TARGET) > 0.05):
            break
    upstream = float(rng.normal())

    def evaluate() -> float:
        return upstream * dkr.confidence_regularizer(raw, foreground)

    def analytic() -> Inputs:
        return {"raw": dkr.confidence_regularizer_vjp(raw, foreground, upstream)}

    return GradCase({"raw": raw}, evaluate, analytic)


def _seg_loss_case(rng: np.random.Generator) -> GradCase:
    logits = rng.normal(size=(4, 4, 4))
    labels = rng.integers(0, 4, size=(4, 4))
    upstream = float(rng.normal())

    def evaluate() -> float:
        return upstream * losses.seg_loss(logits, labels)

    def analytic() -> Inputs:
        return {"logits": losses.seg_loss_vjp(logits, labels, upstream)}

    return GradCase({"logits": logits}, evaluate, analytic)


def _vector_loss_case(rng: np.random.Generator) -> GradCase:
    gt = rng.normal(size=(4, 4, 4))
    pred = gt + _safe_offsets(rng, gt.shape)
    mask = rng.random((4, 4)) < 0.6
    mask[0, 0] = True
    upstream = float(rng.normal())

    def evaluate() -> float:
        return upstream * losses.vector_loss(pred, gt, mask)

    def analytic() -> Inputs:
        return {"pred": losses.vector_loss_vjp(pred, gt, mask, upstream)}

    return GradCase({"pred": pred}, evaluate, analytic)


def _proxy_voting_case(rng: np.random.Generator) -> GradCase:
    size, m = 4, 2
    labels = rng.integers(1, 3, size=(size, size))
    mask = rng.random((size, size)) < 0.7
    mask[0, 0] = True
    keypoints = {c: rng.uniform(8.0, 12.0, size=(m, 2)) for c in (1, 2)}
    pred = rng.normal(size=(size, size, 2 * m))
    for y, x in zip(*np.nonzero(mask)):
        for k in range(m):
            towards = keypoints[labels[y, x]][k] - np.array([x, y], dtype=np.float64)
            distance = abs(_safe_offsets(rng, 1)[0])
            turn = np.arcsin(distance / np.linalg.norm(towards)) * rng.choice([-1.0, 1.0])
            heading = np.arctan2(towards[1], towards[0]) + turn
            pred[y, x, 2 * k : 2 * k + 2] = rng.uniform(0.5, 2.0) * np.array([np.cos(heading), np.sin(heading)])
    upstream = float(rng.normal())

    def evaluate() -> float:
        return upstream * losses.proxy_voting_loss(pred, keypoints, mask, labels)

    def analytic() -> Inputs:
        return {"pred": losses.proxy_voting_loss_vjp(pred, keypoints, mask, labels, upstream)}

    return GradCase({"pred": pred}, evaluate, analytic)


def _keypoint_loss_case(rng: np.random.Generator) -> GradCase:
    m = 3
    gt = {c: rng.uniform(0.0, 50.0, size=(m, 2)) for c in (1, 2)}
    inputs: Inputs = {}
    for c in (1, 2):
        while True:
            heading = rng.uniform(-np.pi, np.pi, size=m)
            offsets = rng.uniform(0.5, 3.0, size=m)[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
            if abs(np.mean(np.linalg.norm(offsets, axis=1)) - 1.0) > 0.1:
                break
        inputs[f"pred.{c}"] = gt[c] + offsets
    upstream = float(rng.normal())

    def current() -> Dict[int, np.ndarray]:
        return {c: inputs[f"pred.{c}"] for c in (1, 2)}

    def evaluate() -> float:
        return upstream * losses.keypoint_loss(current(), gt)

    def analytic() -> Inputs:
        grads = losses.keypoint_loss_vjp(current(), gt, upstream)
        return {f"pred.{c}": grads[c] for c in (1, 2)}

    return GradCase(inputs, evaluate, analytic)


CASES: Dict[str, Tuple[str, Callable[[np.random.Generator], GradCase]]] = {
    "temperature_softmax": ("semantic_norm", _temperature_softmax_case),
    "clade": ("semantic_norm", _clade_case),
    "object_aware_conv": ("guided_ops", _conv_case),
    "object_aware_upsample": ("guided_ops", _upsample_case),
    "dkr": ("dkr", _dkr_case),
    "confidence_regularizer": ("dkr", _confidence_regularizer_case),
    "seg_loss": ("losses", _seg_loss_case),
    "vector_loss": ("losses", _vector_loss_case),
    "proxy_voting_loss": ("losses", _proxy_voting_case),
    "keypoint_loss": ("losses", _keypoint_loss_case),
}
GROUPS = tuple(sorted({group for group, _ in CASES.values()}))


def resolve_kernels(selection: Optional[Iterable[str]]) -> Tuple[str, ...]:
    """Kernel names for a selection of kernel or group names (all when empty)."""
    if not selection:
        return tuple(CASES)
    chosen = []
    for name in selection:
        if name in CASES:
            matches = [name]
        elif name in GROUPS:
            matches = [k for k, (group, _) in CASES.items() if group == name]
        else:
            raise ParameterError(f"unknown kernel {name!r}; choose from {', '.join(GROUPS + tuple(CASES))}")
        chosen.extend(m for m in matches if m not in chosen)
    return tuple(chosen)


def run_gradcheck(
    kernels: Optional[Sequence[str]] = None,
    instances: int = DEFAULT_INSTANCES,
    seed: int = 0,
    corrupt: Iterable[str] = (),
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradcheckReport:
    if instances < 1:
        raise ParameterError("at least one instance per kernel is required")
    corrupted = set(resolve_kernels(list(corrupt))) if corrupt else set()
    reports = []
    order = list(CASES)
    for name in resolve_kernels(kernels):
        group, build = CASES[name]
        index = order.index(name)
        worst = 0.0
        for instance in range(instances):
            rng = np.random.default_rng([seed, index, instance])
            worst = max(worst, check_case(build(rng), step, corrupt=name in corrupted))
        log.debug("%s: max relative error %.3e over %d instances", name, worst, instances)
        reports.append(KernelReport(name, group, instances, worst, tolerance))
    return GradcheckReport(tuple(reports))
