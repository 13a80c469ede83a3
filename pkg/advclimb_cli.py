#!/usr/bin/env python3
"""
Adversarial climbing CLI

Generates synthetic data, trains the toy classifier, climbs localization maps
and evaluates seeds and boxes. Every subcommand writes its artifacts and a
``summary.json`` below ``--out``.

Usage:
    python advclimb_cli.py gen-data --out runs/data --seed 0
    python advclimb_cli.py train --data runs/data --out runs/model_seg
    python advclimb_cli.py climb --data runs/data --model runs/model_seg/model --out runs/climb
    python advclimb_cli.py seed --data runs/data --climb-dir runs/climb --out runs/seed
    python advclimb_cli.py eval-seg --data runs/data --pred runs/seed/seeds --climb-dir runs/climb --out runs/eval
    python advclimb_cli.py eval-loc --mode loc --data runs/data_loc --model runs/model_loc/model --ablation
    python advclimb_cli.py viz --data runs/data --model runs/model_seg/model --climb-dir runs/climb
    python advclimb_cli.py sweep --param lambda --values 0,1,3,5,7,10 --data runs/data --model runs/model_seg/model

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 missing input,
4 invalid or contradictory configuration, 5 numerical / shape failure,
6 malformed file.
"""

import argparse
import json
import logging
import sys
from typing import NoReturn

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import AdvClimbError
from app.services.pipeline_service import PipelineService
from app.services.settings_resolver import RunConfigResolver, load_config_file

logger = logging.getLogger("advclimb")

COMMANDS = {
    "gen-data": PipelineService.gen_data,
    "train": PipelineService.train,
    "climb": PipelineService.climb,
    "seed": PipelineService.seed,
    "eval-seg": PipelineService.eval_seg,
    "eval-loc": PipelineService.eval_loc,
    "viz": PipelineService.viz,
    "sweep": PipelineService.sweep,
}

# argparse destinations that are not run settings
_NON_SETTINGS = {"command", "config", "verbose"}


def run_command(args) -> dict:
    """Resolve flags > --config file > settings, then run the subcommand."""
    flags = {k: v for k, v in vars(args).items() if k not in _NON_SETTINGS}
    resolver = RunConfigResolver(args.command, flags, load_config_file(args.config))
    run = resolver.resolve()
    logger.info(f"Running {run.command} -> {run.out}")
    return COMMANDS[args.command](PipelineService(run))


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output directory (default: <output_root>/<command>)")
    common.add_argument("--seed", type=int, help="Root random seed")
    common.add_argument("--workers", type=int, help="Worker processes for per-image work")
    common.add_argument("--config", help="JSON file of flag values; explicit flags win")
    common.add_argument("--mode", choices=["seg", "loc"], help="seg: multi-label, lambda=7; loc: single-label, lambda=0.01")
    common.add_argument("--data", help="Dataset directory written by gen-data")
    common.add_argument("--split", help="Dataset split (default: test)")
    common.add_argument("--model", help="Checkpoint directory written by train")
    common.add_argument("--theta-grid", dest="theta_grid", help="Comma-separated background thresholds")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def _add_climb_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--steps", type=int, help="Climbing steps T")
    parser.add_argument("--xi", type=float, help="Step size")
    parser.add_argument("--lambda", dest="lambda", type=float, help="Restricting-mask penalty weight")
    parser.add_argument("--tau", type=float, help="Restricting-mask threshold")
    parser.add_argument("--mask-threshold", dest="mask_threshold", type=float, help="Alias of --tau")
    parser.add_argument("--suppress-others", dest="suppress_others", choices=["on", "off"], help="Subtract other-class logits")
    parser.add_argument("--aggregation", choices=["sum", "last"], help="How per-step CAMs are combined")
    parser.add_argument("--direction", choices=["climb", "attack"], help="Climb (default) or adversarial attack")
    parser.add_argument("--saliency", help="Directory of <item_id>.png saliency masks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Adversarial climbing pipeline")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")
    common = _common_parser()

    # gen-data
    gen = subparsers.add_parser("gen-data", parents=[common], help="Generate the synthetic two-part dataset")
    gen.add_argument("--class-count", dest="class_count", type=int, help="Number of classes")
    gen.add_argument("--image-size", dest="image_size", type=int, help="Square image extent (>= 32)")
    gen.add_argument("--objects-per-image", dest="objects_per_image", type=int, help="Objects per scene")
    gen.add_argument("--train-count", dest="train_count", type=int, help="Training images")
    gen.add_argument("--test-count", dest="test_count", type=int, help="Test images")
    gen.add_argument("--rgb", action="store_true", default=None, help="Three-channel images")
    gen.add_argument("--head-contrast", dest="head_contrast", type=float, help="Contrast of the discriminative part")
    gen.add_argument("--body-contrast", dest="body_contrast", type=float, help="Contrast of the weak part")

    # train
    train = subparsers.add_parser("train", parents=[common], help="Train the classifier")
    train.add_argument("--epochs", type=int, help="Training epochs")
    train.add_argument("--batch-size", dest="batch_size", type=int, help="Minibatch size")
    train.add_argument("--learning-rate", dest="learning_rate", type=float, help="SGD learning rate")

    # climb
    climb = subparsers.add_parser("climb", parents=[common], help="Climb localization maps for every image/class")
    _add_climb_flags(climb)

    # seed
    seed = subparsers.add_parser("seed", parents=[common], help="Seeds and pseudo ground truth from climbed maps")
    seed.add_argument("--climb-dir", dest="climb_dir", help="Output of climb")
    seed.add_argument("--theta", type=float, help="Background threshold (default: best over --theta-grid)")
    seed.add_argument("--saliency", help="Directory of <item_id>.png saliency masks")

    # eval-seg
    eval_seg = subparsers.add_parser("eval-seg", parents=[common], help="mIoU, precision/recall/F1 and noise curves")
    eval_seg.add_argument("--pred", help="Directory of predicted label PNGs")
    eval_seg.add_argument("--gt", help="Directory of ground-truth label PNGs (default: dataset masks)")
    eval_seg.add_argument("--climb-dir", dest="climb_dir", help="Climb output for per-step curves")
    eval_seg.add_argument("--theta", type=float, help="Threshold for per-step curves")
    eval_seg.add_argument("--per-image", dest="per_image", action="store_true", default=None, help="Per-image mIoU")

    # eval-loc
    eval_loc = subparsers.add_parser("eval-loc", parents=[common], help="MaxBoxAccV2 and Top-1 localization")
    eval_loc.add_argument("--climb-dir", dest="climb_dir", help="Climb output holding the maps")
    eval_loc.add_argument("--theta", type=float, help="Threshold for Top-1 (default: GT-known best)")
    eval_loc.add_argument("--iou-thresholds", dest="iou_thresholds", help="Comma-separated IoU thresholds")
    eval_loc.add_argument("--ablation", action="store_true", default=None, help="Compare CAM, lambda=0 and lambda climbing")
    _add_climb_flags(eval_loc)

    # viz
    viz = subparsers.add_parser("viz", parents=[common], help="Heatmaps, strips, histograms and landscapes")
    viz.add_argument("--climb-dir", dest="climb_dir", help="Climb output to render")
    viz.add_argument("--viz-items", dest="viz_items", type=int, help="Number of items to render")
    viz.add_argument("--viz-steps", dest="viz_steps", help="Comma-separated steps for strips")
    viz.add_argument("--landscape-grid", dest="landscape_grid", type=int, help="Landscape samples per axis")
    viz.add_argument("--landscape-radius", dest="landscape_radius", type=float, help="Landscape half-width")

    # sweep
    sweep = subparsers.add_parser("sweep", parents=[common], help="Seed mIoU over one climbing hyper-parameter")
    sweep.add_argument("--param", choices=["lambda", "tau", "xi", "steps"], help="Parameter to vary")
    sweep.add_argument("--values", help="Comma-separated values")
    _add_climb_flags(sweep)
    return parser


def _fail(record: dict) -> NoReturn:
    print(json.dumps(record), file=sys.stderr)
    sys.exit(record["exit_code"])


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if not getattr(args, "command", None):
        parser.print_help()
        sys.exit(2)

    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        summary = run_command(args)
    except AdvClimbError as e:
        _fail(e.to_record())
    except ValidationError as e:
        _fail({"error": str(e), "type": "ValidationError", "exit_code": 4})
    except Exception as e:
        logger.exception("Unexpected failure")
        _fail({"error": str(e), "type": type(e).__name__, "exit_code": 1})
    print(json.dumps(summary["results"], indent=2, sort_keys=True, default=str))


if __name__ == "__main__":
    main()
