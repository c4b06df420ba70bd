from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from guided_pose.inference_pipeline import PipelineConfig, VotingParams
from guided_pose.losses import LossWeights
from guided_pose.pose_geometry import RansacParams
from guided_pose.semantic_norm import DEFAULT_TAU

THREADS_ENV = "GUIDEDPOSE_THREADS"


@dataclass(frozen=True)
class RunConfig:
    command: str
    paths: Dict[str, Path] = field(default_factory=dict)
    pipeline: PipelineConfig = PipelineConfig()
    loss_weights: LossWeights = LossWeights()
    tau: float = DEFAULT_TAU
    seed: int = 0
    threads: int = 1


def resolve_threads(flag: Optional[int]) -> int:
    """``--threads`` if given, else ``GUIDEDPOSE_THREADS``, else the available CPUs."""
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from exc
        if value <= 0:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def require_files(paths: Dict[str, Path]) -> None:
    for name, path in paths.items():
        if not path.is_file():
            raise FileNotFoundError(f"--{name} file not found: {path}")


def run_config_from_args(args: argparse.Namespace, input_names: tuple[str, ...]) -> RunConfig:
    """Validate the input paths and collect the pipeline settings of ``infer`` and ``bench``."""
    paths = {name: Path(getattr(args, name)) for name in input_names}
    require_files(paths)
    pipeline = PipelineConfig(
        mode=args.mode,
        min_component_pixels=args.min_component_pixels,
        voting=VotingParams(seed=args.seed),
        ransac=RansacParams(seed=args.seed),
        region_strategy=args.region_strategy,
        seed=args.seed,
    )
    return RunConfig(
        command=args.command,
        paths=paths,
        pipeline=pipeline,
        seed=args.seed,
        threads=resolve_threads(args.threads),
    )
