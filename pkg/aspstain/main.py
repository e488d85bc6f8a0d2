"""
Command-line entry point.

    python -m aspstain.main train --config exp.cfg [--resume ckpt.pt]
    python -m aspstain.main eval --ckpt final.pt --data <root> --split test --out metrics.csv [--features tiny|pretrained]
    python -m aspstain.main translate --ckpt final.pt --in <dir> --out <dir>
    python -m aspstain.main viz --ckpt final.pt --pair <id> --out <dir> [--data <root>]
    python -m aspstain.main synth --config exp.cfg --out <root>

Exit codes: 0 success, 2 config or checkpoint error, 3 data error, 4 numeric abort.
"""

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from aspstain.config import ExperimentConfig, Settings, load_experiment_config
from aspstain.core.exceptions import AspStainError, ConfigurationError, DataError
from aspstain.data.dataset import load_paired_dataset
from aspstain.data.synthetic import synth_generate
from aspstain.metrics.table import MetricTable
from aspstain.models.checkpoint import load_checkpoint
from aspstain.services.evaluation_service import EvaluationService, MetricSettings
from aspstain.services.training_service import TrainingService
from aspstain.services.visualization_service import VisualizationService
from aspstain.utils.logger import get_logger, setup_logging

logger = get_logger("aspstain.main")


def _checkpoint_config(path: str) -> Optional[ExperimentConfig]:
    manifest = load_checkpoint(path)["manifest"]
    if "config" not in manifest:
        return None
    return ExperimentConfig.model_validate(manifest["config"])


def cmd_train(args, env: Settings) -> int:
    config = load_experiment_config(args.config, env)
    result = TrainingService(config, env.DEVICE).fit(resume=args.resume)
    logger.info(f"Finished {result.steps} steps; checkpoint {result.checkpoint}, log {result.loss_log}")
    return 0


def cmd_eval(args, env: Settings) -> int:
    config = load_experiment_config(args.config, env) if args.config else _checkpoint_config(args.ckpt)
    overrides = {"features": args.features, "dataset_name": args.dataset_name, "method": args.method}
    if config is not None:
        metric_settings = MetricSettings.from_config(config, **overrides)
    else:
        metric_settings = MetricSettings(**{k: v for k, v in overrides.items() if v is not None})
    manifest = load_paired_dataset(args.data, args.split)
    row = EvaluationService(metric_settings, env.DEVICE).evaluate(args.ckpt, manifest)

    table = MetricTable.load_or_empty(args.out)
    table.add(row)
    table.to_csv(args.out)
    logger.info(f"Wrote metrics to {args.out}")
    return 0


def cmd_translate(args, env: Settings) -> int:
    report = EvaluationService(device=env.DEVICE).translate(args.ckpt, args.inputs, args.out)
    if report.failed and not report.written:
        logger.error(f"None of the {len(report.failed)} inputs could be translated")
        return DataError.exit_code
    return 0


def cmd_viz(args, env: Settings) -> int:
    data_root = args.data
    if data_root is None:
        config = _checkpoint_config(args.ckpt)
        data_root = config.data_root if config else None
    if not data_root:
        raise ConfigurationError("No dataset given (--data) and the checkpoint names none")
    manifest = load_paired_dataset(data_root, args.split)
    VisualizationService(env.DEVICE, args.bins).visualize(args.ckpt, manifest, args.pair, args.out, args.locations)
    return 0


def cmd_synth(args, env: Settings) -> int:
    config = load_experiment_config(args.config, env)
    try:
        manifest = synth_generate(config.synth(), args.out)
    except OSError as e:
        raise DataError(f"Cannot write the synthetic dataset to {args.out}: {e}") from e
    logger.info(f"Synthetic dataset ready: {len(manifest)} training pairs under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspstain", description="Paired H&E to IHC stain translation")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train a translation model")
    train.add_argument("--config", required=True)
    train.add_argument("--resume", default=None)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="Score a checkpoint on a paired split")
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--split", default="test", choices=["train", "test"])
    evaluate.add_argument("--out", default="metrics.csv")
    evaluate.add_argument("--features", default=None, choices=["tiny", "pretrained"])
    evaluate.add_argument("--config", default=None)
    evaluate.add_argument("--dataset-name", dest="dataset_name", default=None)
    evaluate.add_argument("--method", default=None)
    evaluate.set_defaults(handler=cmd_eval)

    translate = sub.add_parser("translate", help="Translate a folder of H&E images")
    translate.add_argument("--ckpt", required=True)
    translate.add_argument("--in", dest="inputs", required=True)
    translate.add_argument("--out", required=True)
    translate.set_defaults(handler=cmd_translate)

    viz = sub.add_parser("viz", help="Similarity heatmaps and histogram for one pair")
    viz.add_argument("--ckpt", required=True)
    viz.add_argument("--pair", required=True)
    viz.add_argument("--out", required=True)
    viz.add_argument("--data", default=None)
    viz.add_argument("--split", default="train", choices=["train", "test"])
    viz.add_argument("--bins", type=int, default=50)
    viz.add_argument("--locations", type=int, default=None)
    viz.set_defaults(handler=cmd_viz)

    synth = sub.add_parser("synth", help="Generate a synthetic paired dataset")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        env = Settings()
    except ValidationError as e:
        print(f"Invalid environment settings: {e}", file=sys.stderr)
        return ConfigurationError.exit_code
    setup_logging(env.LOG_LEVEL, env.LOG_FILE)

    try:
        return args.handler(args, env)
    except AspStainError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
