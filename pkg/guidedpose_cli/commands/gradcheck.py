from __future__ import annotations

import argparse
from typing import Any

from guided_pose.gradcheck import DEFAULT_STEP, DEFAULT_TOLERANCE, run_gradcheck

from ..output import format_value, key_values


def run_gradcheck_command(args: argparse.Namespace) -> dict[str, Any]:
    report = run_gradcheck(
        kernels=args.kernels,
        instances=args.instances,
        seed=args.seed,
        corrupt=args.corrupt or (),
    )
    return {
        "command": "gradcheck",
        "step": DEFAULT_STEP,
        "tolerance": DEFAULT_TOLERANCE,
        "instances": args.instances,
        "seed": args.seed,
        "kernels": [
            {
                "name": k.name,
                "group": k.group,
                "max_relative_error": k.max_relative_error,
                "passed": k.passed,
            }
            for k in report.kernels
        ],
        "passed": report.passed,
        "failed": list(report.failed),
    }


def render_text(payload: dict[str, Any]) -> str:
    lines = [
        f"{k['name']:<24} group={k['group']:<14} max_rel_error={k['max_relative_error']:.3e} "
        f"{'pass' if k['passed'] else 'FAIL'}\n"
        for k in payload["kernels"]
    ]
    pairs = [(f"kernel.{k['name']}.max_rel_error", k["max_relative_error"]) for k in payload["kernels"]]
    pairs.append(("passed", payload["passed"]))
    if payload["failed"]:
        pairs.append(("failed", ",".join(payload["failed"])))
    return "".join(lines) + key_values(pairs)


def failure_message(payload: dict[str, Any]) -> str:
    return f"gradient check failed for: {', '.join(payload['failed'])} (tolerance {format_value(payload['tolerance'])})"
