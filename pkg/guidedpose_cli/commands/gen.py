from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

import numpy as np

from guided_pose.dkr import Keypoints2D
from guided_pose.inference_pipeline import ClassResult, format_pose_record
from guided_pose.synthgen import NoiseSpec, generate_scene, render_sample
from guided_pose.tensor_io import save_tensor, write_scene

from ..output import key_values

SCENE_FILE = "scene.txt"
SEG_FILE = "seg.cpt"
FIELD_FILE = "field.cpt"
CONF_FILE = "conf.cpt"
GT_POSES_FILE = "gt_poses.txt"


def run_gen(args: argparse.Namespace) -> dict[str, Any]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scene = generate_scene(args.objects, seed=args.seed)
    noise = NoiseSpec(angular_sigma=args.noise_sigma, outlier_fraction=args.outliers, seed=args.seed)
    sample = render_sample(scene, noise, num_keypoints=args.keypoints)

    records = []
    for obj in sorted(scene.objects, key=lambda o: o.class_id):
        points = sample.keypoints[obj.class_id]
        keypoints = Keypoints2D(points=points, valid=np.ones(len(points), dtype=bool))
        records.append(format_pose_record(ClassResult(obj.class_id, keypoints, obj.pose, "ok")))

    (out / SCENE_FILE).write_text(write_scene(scene), encoding="utf-8")
    save_tensor(out / SEG_FILE, sample.seg.probs)
    save_tensor(out / FIELD_FILE, sample.field)
    save_tensor(out / CONF_FILE, sample.raw_conf)
    (out / GT_POSES_FILE).write_text("".join(r + "\n" for r in records), encoding="utf-8")

    return {
        "command": "gen",
        "out": str(out),
        "objects": len(scene.objects),
        "classes": list(scene.class_ids),
        "seed": args.seed,
        "image_size": list(scene.image_size),
        "keypoints": args.keypoints,
        "noise_sigma": args.noise_sigma,
        "outliers": args.outliers,
        "foreground_pixels": int(np.count_nonzero(sample.labels)),
        "files": [SCENE_FILE, SEG_FILE, FIELD_FILE, CONF_FILE, GT_POSES_FILE],
    }


def render_text(payload: dict[str, Any]) -> str:
    lines = "".join(f"wrote {payload['out']}/{name}\n" for name in payload["files"])
    return lines + key_values(
        [
            ("objects", payload["objects"]),
            ("seed", payload["seed"]),
            ("foreground_pixels", payload["foreground_pixels"]),
        ]
    )
