from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from guided_pose.errors import ContentMismatchError
from guided_pose.inference_pipeline import parse_pose_records
from guided_pose.pose_geometry import EvaluationRecord, add_metric, projection_metric, recall_report
from guided_pose.synthgen import scene_models
from guided_pose.tensor_io import load_scene

from ..config import require_files
from ..output import format_value, key_values


def run_eval(args: argparse.Namespace) -> dict[str, Any]:
    scene_path, estimates_path = Path(args.scene), Path(args.estimates)
    require_files({"scene": scene_path, "estimates": estimates_path})
    scene = load_scene(scene_path)
    records = parse_pose_records(estimates_path.read_text(encoding="utf-8"))

    by_class = {}
    for record in records:
        if record.class_id in by_class:
            raise ContentMismatchError(f"estimates list class {record.class_id} more than once")
        by_class[record.class_id] = record
    unknown = sorted(set(by_class) - set(scene.class_ids))
    if unknown:
        raise ContentMismatchError(f"estimates hold classes absent from the scene: {unknown}")

    models = scene_models(scene, base_dir=scene_path.parent)
    adds, proj = [], []
    rows = []
    for class_id in scene.class_ids:
        gt_pose = scene.object_for(class_id).pose
        record = by_class.get(class_id)
        pose = record.pose if record is not None else None
        if pose is None:
            adds.append(EvaluationRecord(class_id, detected=False, correct=False))
            proj.append(EvaluationRecord(class_id, detected=False, correct=False))
            rows.append({"class_id": class_id, "detected": False, "add": None, "proj2d": None})
            continue
        add = add_metric(pose, gt_pose, models[class_id])
        projection = projection_metric(pose, gt_pose, models[class_id], scene.intrinsics)
        adds.append(EvaluationRecord(class_id, detected=True, correct=add.correct))
        proj.append(EvaluationRecord(class_id, detected=True, correct=projection.correct))
        rows.append(
            {
                "class_id": class_id,
                "detected": True,
                "symmetric": models[class_id].symmetric,
                "add": add.value,
                "add_correct": add.correct,
                "proj2d": projection.value,
                "proj2d_correct": projection.correct,
            }
        )

    adds_report = recall_report(adds)
    proj_report = recall_report(proj)
    return {
        "command": "eval",
        "classes": rows,
        "adds_recall": adds_report.per_class,
        "proj2d_recall": proj_report.per_class,
        "mean_adds_recall": adds_report.mean,
        "mean_proj2d_recall": proj_report.mean,
    }


def render_text(payload: dict[str, Any]) -> str:
    header = f"{'class':>5}  {'detected':>8}  {'ADD(-S) m':>12}  {'2DP px':>10}  {'ADD(-S) ok':>10}  {'2DP ok':>6}\n"
    table = [header]
    for row in payload["classes"]:
        if row["detected"]:
            table.append(
                f"{row['class_id']:>5}  {'yes':>8}  {row['add']:>12.6f}  {row['proj2d']:>10.3f}"
                f"  {format_value(row['add_correct']):>10}  {format_value(row['proj2d_correct']):>6}\n"
            )
        else:
            table.append(f"{row['class_id']:>5}  {'no':>8}  {'-':>12}  {'-':>10}  {'false':>10}  {'false':>6}\n")
    pairs = []
    for class_id, value in payload["adds_recall"].items():
        pairs.append((f"class.{class_id}.adds_recall", value))
        pairs.append((f"class.{class_id}.proj2d_recall", payload["proj2d_recall"][class_id]))
    pairs.append(("mean.adds_recall", payload["mean_adds_recall"]))
    pairs.append(("mean.proj2d_recall", payload["mean_proj2d_recall"]))
    return "".join(table) + key_values(pairs)
