from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np

from guided_pose.errors import ShapeError
from guided_pose.inference_pipeline import InferenceResult, describe_timings, format_pose_record, infer_poses
from guided_pose.pose_geometry import KeypointModel
from guided_pose.semantic_norm import SoftSegmentation
from guided_pose.synthgen import scene_models
from guided_pose.tensor_io import SceneDescription, load_scene, load_tensor

from ..config import RunConfig, run_config_from_args

INPUTS = ("scene", "seg", "field", "conf")


@dataclass(frozen=True, eq=False)
class InferenceInputs:
    scene: SceneDescription
    seg: SoftSegmentation
    field: np.ndarray
    raw_conf: np.ndarray
    models: Dict[int, KeypointModel]


def load_inputs(config: RunConfig) -> InferenceInputs:
    scene_path: Path = config.paths["scene"]
    scene = load_scene(scene_path)
    seg = SoftSegmentation(load_tensor(config.paths["seg"]))
    field = load_tensor(config.paths["field"]).astype(np.float64)
    raw_conf = load_tensor(config.paths["conf"]).astype(np.float64)
    if raw_conf.ndim != 3:
        raise ShapeError(f"confidence tensor must be H x W x m, got {raw_conf.shape}")
    if seg.shape != tuple(scene.image_size):
        raise ShapeError(f"segmentation {seg.shape} does not match scene image size {scene.image_size}")
    models = scene_models(scene, raw_conf.shape[2], base_dir=scene_path.parent)
    return InferenceInputs(scene, seg, field, raw_conf, models)


def run_pipeline(inputs: InferenceInputs, config: RunConfig) -> InferenceResult:
    return infer_poses(
        inputs.seg,
        inputs.field,
        inputs.raw_conf,
        inputs.models,
        inputs.scene.intrinsics,
        config.pipeline,
        workers=config.threads,
    )


def run_infer(args: argparse.Namespace) -> dict[str, Any]:
    config = run_config_from_args(args, INPUTS)
    inputs = load_inputs(config)
    result = run_pipeline(inputs, config)
    records = [format_pose_record(r) for r in result.results]
    if args.out:
        Path(args.out).write_text("".join(r + "\n" for r in records), encoding="utf-8")
    return {
        "command": "infer",
        "mode": config.pipeline.mode,
        "threads": config.threads,
        "records": records,
        "statuses": {str(r.class_id): r.status for r in result.results},
        "timings": result.timings,
    }


def render_text(payload: dict[str, Any]) -> str:
    lines = list(payload["records"]) + list(describe_timings(payload["timings"]))
    return "".join(line + "\n" for line in lines)
