from __future__ import annotations

import argparse
from typing import Any

import numpy as np

from guided_pose.inference_pipeline import format_pose_record

from ..config import run_config_from_args
from ..output import key_values
from .infer import INPUTS, load_inputs, run_pipeline

STAGES = ("cc", "keypoints", "pnp")
CONFIDENT_REPETITIONS = 100


def run_bench(args: argparse.Namespace) -> dict[str, Any]:
    config = run_config_from_args(args, INPUTS)
    inputs = load_inputs(config)
    for _ in range(args.warmup):
        run_pipeline(inputs, config)

    samples = {stage: [] for stage in STAGES}
    outputs = set()
    for _ in range(args.repetitions):
        result = run_pipeline(inputs, config)
        for stage in STAGES:
            samples[stage].append(1000.0 * result.timings[stage])
        outputs.add("\n".join(format_pose_record(r) for r in result.results))

    stages = {}
    for stage in STAGES:
        values = np.asarray(samples[stage])
        stages[stage] = {
            "median_ms": float(np.median(values)),
            "p95_ms": float(np.percentile(values, 95)),
            "min_ms": float(values.min()),
        }
    return {
        "command": "bench",
        "mode": config.pipeline.mode,
        "threads": config.threads,
        "repetitions": args.repetitions,
        "warmup": args.warmup,
        "low_confidence": args.repetitions < CONFIDENT_REPETITIONS,
        "deterministic": len(outputs) == 1,
        "stages": stages,
    }


def render_text(payload: dict[str, Any]) -> str:
    pairs = []
    for stage in STAGES:
        for stat in ("median_ms", "p95_ms"):
            pairs.append((f"stage.{stage}.{stat}", payload["stages"][stage][stat]))
    pairs += [
        ("repetitions", payload["repetitions"]),
        ("low_confidence", payload["low_confidence"]),
        ("deterministic", payload["deterministic"]),
    ]
    return key_values(pairs)
