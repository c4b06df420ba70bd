from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Callable

from guided_pose.errors import ContentMismatchError, GuidedPoseError, ShapeError
from guided_pose.inference_pipeline import DEFAULT_MIN_COMPONENT_PIXELS, MODES, REGION_STRATEGIES
from guided_pose.pose_geometry import NUM_KEYPOINTS
from guided_pose.synthgen import MAX_GENERATED_OBJECTS

from . import helptext
from .commands import bench, evaluate, gen, gradcheck, infer
from .output import dumps_json
from .parsers import fraction, kernel_list, nonnegative_float, nonnegative_int, positive_int

EXIT_OK = 0
EXIT_IO = 2
EXIT_SHAPE = 3
EXIT_MISMATCH = 4
EXIT_GRADCHECK = 5


class GuidedPoseArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--json", action="store_true", help="emit compact JSON")
    parser.add_argument("--pretty", action="store_true", help="pretty-print JSON when used with --json")
    parser.add_argument("--verbose", action="store_true", help="debug logging to stderr")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scene", required=True, help="scene text file (camera, objects, models)")
    parser.add_argument("--seg", required=True, help="segmentation CPT1 tensor, H x W x Nc")
    parser.add_argument("--field", required=True, help="vector field CPT1 tensor, H x W x 2m")
    parser.add_argument("--conf", required=True, help="raw confidence CPT1 tensor, H x W x m")
    parser.add_argument("--mode", choices=MODES, default="dkr", help="keypoint regressor (default: dkr)")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed for voting and RANSAC")
    parser.add_argument("--threads", type=positive_int, default=None, help="worker threads (default: GUIDEDPOSE_THREADS or CPU count)")
    parser.add_argument(
        "--min-component-pixels",
        type=positive_int,
        default=DEFAULT_MIN_COMPONENT_PIXELS,
        help="smallest region that is solved (default: %(default)s)",
    )
    parser.add_argument("--region-strategy", choices=REGION_STRATEGIES, default="largest", help="component kept per class")


def _subcommand(subparsers, name: str, help_text: str, description: str, epilog: str) -> argparse.ArgumentParser:
    return subparsers.add_parser(
        name,
        help=help_text,
        description=description,
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = GuidedPoseArgumentParser(
        prog="guidedpose",
        description=helptext.ROOT_DESCRIPTION,
        epilog=helptext.ROOT_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    gen_parser = _subcommand(subparsers, "gen", "generate a synthetic scene", helptext.GEN_DESCRIPTION, helptext.GEN_EPILOG)
    gen_parser.add_argument("--objects", type=nonnegative_int, default=3, help=f"object count, at most {MAX_GENERATED_OBJECTS}")
    gen_parser.add_argument("--seed", type=int, default=0, help="RNG seed for layout jitter and noise")
    gen_parser.add_argument("--out", required=True, help="output directory")
    gen_parser.add_argument("--noise-sigma", type=nonnegative_float, default=0.0, help="angular field noise in radians")
    gen_parser.add_argument("--outliers", type=fraction, default=0.0, help="fraction of pixels with random directions")
    gen_parser.add_argument("--keypoints", type=positive_int, default=NUM_KEYPOINTS, help="keypoints per object")
    _add_output_flags(gen_parser)
    gen_parser.set_defaults(func=_handler(gen.run_gen, gen.render_text))

    infer_parser = _subcommand(subparsers, "infer", "estimate poses from tensors", helptext.INFER_DESCRIPTION, helptext.INFER_EPILOG)
    _add_pipeline_flags(infer_parser)
    infer_parser.add_argument("--out", default=None, help="also write pose records to this file")
    _add_output_flags(infer_parser)
    infer_parser.set_defaults(func=_handler(infer.run_infer, infer.render_text))

    eval_parser = _subcommand(subparsers, "eval", "score pose records", helptext.EVAL_DESCRIPTION, helptext.EVAL_EPILOG)
    eval_parser.add_argument("--scene", required=True, help="scene text file with ground-truth poses")
    eval_parser.add_argument("--estimates", required=True, help="pose records written by infer")
    _add_output_flags(eval_parser)
    eval_parser.set_defaults(func=_handler(evaluate.run_eval, evaluate.render_text))

    grad_parser = _subcommand(
        subparsers, "gradcheck", "finite-difference gradient checks", helptext.GRADCHECK_DESCRIPTION, helptext.GRADCHECK_EPILOG
    )
    grad_parser.add_argument("--kernels", type=kernel_list, default=None, help="comma-separated kernels or groups")
    grad_parser.add_argument("--instances", type=positive_int, default=10, help="random instances per kernel")
    grad_parser.add_argument("--seed", type=int, default=0, help="RNG seed for the instances")
    grad_parser.add_argument("--corrupt", type=kernel_list, default=None, help=argparse.SUPPRESS)
    _add_output_flags(grad_parser)
    grad_parser.set_defaults(func=handle_gradcheck)

    bench_parser = _subcommand(subparsers, "bench", "benchmark pipeline stages", helptext.BENCH_DESCRIPTION, helptext.BENCH_EPILOG)
    _add_pipeline_flags(bench_parser)
    bench_parser.add_argument("--repetitions", type=positive_int, default=100, help="timed runs (default: %(default)s)")
    bench_parser.add_argument("--warmup", type=nonnegative_int, default=5, help="untimed runs first (default: %(default)s)")
    _add_output_flags(bench_parser)
    bench_parser.set_defaults(func=_handler(bench.run_bench, bench.render_text))

    parser.set_defaults(func=None)
    return parser


def _emit(args: argparse.Namespace, payload: dict[str, Any], render: Callable[[dict[str, Any]], str]) -> None:
    if args.json:
        sys.stdout.write(dumps_json(payload, pretty=args.pretty))
    else:
        sys.stdout.write(render(payload))


def _handler(run: Callable[[argparse.Namespace], dict[str, Any]], render: Callable[[dict[str, Any]], str]):
    def handle(args: argparse.Namespace) -> int:
        _emit(args, run(args), render)
        return EXIT_OK

    return handle


def handle_gradcheck(args: argparse.Namespace) -> int:
    payload = gradcheck.run_gradcheck_command(args)
    _emit(args, payload, gradcheck.render_text)
    if not payload["passed"]:
        sys.stderr.write(f"guidedpose: {gradcheck.failure_message(payload)}\n")
        return EXIT_GRADCHECK
    return EXIT_OK


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(f"guidedpose: error: {exc}\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is None:
        parser.print_help()
        return EXIT_OK
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ShapeError as exc:
        return _fail(EXIT_SHAPE, exc)
    except ContentMismatchError as exc:
        return _fail(EXIT_MISMATCH, exc)
    except (OSError, GuidedPoseError, ValueError) as exc:
        return _fail(EXIT_IO, exc)


if __name__ == "__main__":
    raise SystemExit(main())
