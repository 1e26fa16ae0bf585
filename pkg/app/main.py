"""
lanefrm command-line entry point.

Subcommands: generate, train, eval, predict, plot.
Exit codes: 0 success, 2 bad arguments or config, 3 IO/schema/data failure,
4 numerical divergence.
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app.config import VARIANT_NAMES, AblationFlags, SceneParams, TrainConfig, load_train_config, settings
from app.core.errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    LaneGraphError,
    MetricArgumentError,
    NonFiniteError,
    OffMapError,
    SceneParamsError,
    ShapeMismatchError,
    TrainingDivergenceError,
)
from app.core.logger import get_cli_logger

logger = get_cli_logger()

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

VERSION = "lanefrm 0.1.0"


def _scene_params(args: argparse.Namespace) -> SceneParams:
    values = {"num_agents": args.agents, "past_steps": args.past, "future_steps": args.future, "dt": args.dt}
    return SceneParams(**{name: value for name, value in values.items() if value is not None})


def cmd_generate(args: argparse.Namespace) -> int:
    from app.ingestion.dataset import write_dataset
    from app.ingestion.scene_synth import generate_split

    seed = settings.default_seed if args.seed is None else args.seed
    scenes = generate_split(args.kind, args.split, args.count, _scene_params(args), base_seed=seed, workers=args.workers)
    path = write_dataset(scenes, args.out)
    logger.info(f"✅ Wrote {len(scenes)} {args.kind} scenes ({args.split}) to {path}")
    return EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    config = load_train_config(args.config) if args.config else TrainConfig()
    overrides = {
        "seed": args.seed,
        "train_samples": args.samples,
        "epochs": args.epochs,
        "max_steps": args.max_steps,
    }
    update = {name: value for name, value in overrides.items() if value is not None}
    if args.variant is not None:
        update["ablation"] = AblationFlags.preset(args.variant).model_dump()
    if not update:
        return config
    return TrainConfig.model_validate({**config.model_dump(), **update})


def cmd_train(args: argparse.Namespace) -> int:
    from app.ingestion.dataset import read_dataset
    from app.training.trainer import train

    config = _train_config(args)
    scenes = read_dataset(args.dataset)
    checkpoint = Path(args.checkpoint)
    curve = Path(args.out) if args.out else checkpoint.with_suffix(".csv")
    epochs = Path(args.epoch_out) if args.epoch_out else checkpoint.with_name(f"{checkpoint.stem}_epochs.csv")
    result = train(scenes, config, checkpoint_path=checkpoint, curve_path=curve, epoch_path=epochs)
    logger.info(f"✅ Trained {result.steps} steps; loss curve at {result.curve_path}, epoch losses at {result.epoch_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    from app.evaluation.harness import (
        evaluate_baseline,
        evaluate_model,
        evaluate_predictions,
        write_agent_table,
        write_report,
    )
    from app.ingestion.dataset import read_dataset, read_predictions
    from app.model.predictor import LaneFRMModel

    scenes = read_dataset(args.dataset)
    seed = settings.default_seed if args.seed is None else args.seed
    options = {"ks": args.k, "threshold": args.miss_threshold, "rule": args.miss_rule}
    if args.predictions:
        report, table = evaluate_predictions(
            scenes, read_predictions(args.predictions), variant=args.variant or "full", **options
        )
    elif args.checkpoint:
        model = LaneFRMModel.load(args.checkpoint)
        report, table = evaluate_model(model, scenes, num_samples=args.samples, seed=seed, workers=args.workers, **options)
    else:
        report, table = evaluate_baseline(scenes, num_samples=args.samples or 6, **options)

    path = write_report(report, args.out)
    if args.agent_table:
        write_agent_table(table, args.agent_table)
    logger.info(f"✅ Wrote metrics for '{report.variant}' to {path}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    from app.evaluation.harness import predict_scenes
    from app.ingestion.dataset import read_dataset, write_predictions
    from app.model.predictor import LaneFRMModel

    model = LaneFRMModel.load(args.checkpoint)
    scenes = read_dataset(args.dataset)
    seed = settings.default_seed if args.seed is None else args.seed
    predictions = predict_scenes(model, scenes, args.samples, seed, args.workers)
    path = write_predictions(predictions, args.out)
    logger.info(f"✅ Wrote {len(predictions)} prediction sets to {path}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    from app.evaluation.harness import predict_scenes
    from app.evaluation.plots import plot_scenes
    from app.ingestion.dataset import read_dataset, read_predictions
    from app.model.predictor import LaneFRMModel

    scenes = read_dataset(args.dataset)
    if args.limit is not None:
        scenes = scenes[: args.limit]
    predictions = None
    if args.predictions:
        predictions = read_predictions(args.predictions)
    elif args.checkpoint:
        seed = settings.default_seed if args.seed is None else args.seed
        predictions = predict_scenes(LaneFRMModel.load(args.checkpoint), scenes, args.samples, seed)
    paths = plot_scenes(scenes, args.out, predictions)
    logger.info(f"✅ Wrote {len(paths)} plots to {args.out}")
    return EXIT_OK


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanefrm", description="Lane-conditioned stochastic interaction modeling")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    seed_help = "Base seed (default: LANEFRM_SEED or 0)"

    generate = sub.add_parser("generate", help="Write a synthetic scene dataset")
    generate.add_argument("--kind", choices=["merge", "intersection", "follow"], default="merge")
    generate.add_argument("--split", choices=["train", "val"], default="train")
    generate.add_argument("--count", type=_positive_int, default=100)
    generate.add_argument("--seed", type=int, help=seed_help)
    generate.add_argument("--agents", type=int, help="Agents per scene (2-8)")
    generate.add_argument("--past", type=int, help="Past positions t_p")
    generate.add_argument("--future", type=int, help="Future positions t_f")
    generate.add_argument("--dt", type=float, help="Seconds per step")
    generate.add_argument("--workers", type=_positive_int, default=1)
    generate.add_argument("--out", required=True, help="Dataset path (.jsonl)")
    generate.set_defaults(handler=cmd_generate)

    train = sub.add_parser("train", help="Train a model and write a checkpoint and loss curve")
    train.add_argument("--dataset", required=True)
    train.add_argument("--config", help="TrainConfig JSON file")
    train.add_argument("--variant", choices=VARIANT_NAMES)
    train.add_argument("--seed", type=int, help=seed_help)
    train.add_argument("--samples", type=_positive_int, help="Posterior samples per scene (F_train)")
    train.add_argument("--epochs", type=_positive_int)
    train.add_argument("--max-steps", type=_positive_int)
    train.add_argument("--checkpoint", required=True, help="Checkpoint output path")
    train.add_argument("--out", help="Loss curve CSV (default: next to the checkpoint)")
    train.add_argument("--epoch-out", help="Per-epoch loss CSV (default: <checkpoint>_epochs.csv)")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="Write a MetricsReport for a dataset")
    evaluate.add_argument("--dataset", required=True)
    source = evaluate.add_mutually_exclusive_group()
    source.add_argument("--checkpoint", help="Evaluate a trained model")
    source.add_argument("--predictions", help="Evaluate stored predictions")
    evaluate.add_argument("--variant", help="Variant label for stored predictions")
    evaluate.add_argument("--seed", type=int, help=seed_help)
    evaluate.add_argument("--samples", type=_positive_int, help="Samples F per agent")
    evaluate.add_argument("--k", type=_positive_int, nargs="+", help="k values (default: 1, 5, F)")
    evaluate.add_argument("--miss-threshold", type=float, default=2.0)
    evaluate.add_argument("--miss-rule", choices=["final", "any"], default="final")
    evaluate.add_argument("--workers", type=_positive_int, default=1)
    evaluate.add_argument("--agent-table", help="Per-agent metrics CSV")
    evaluate.add_argument("--out", required=True, help="MetricsReport JSON path")
    evaluate.set_defaults(handler=cmd_eval)

    predict = sub.add_parser("predict", help="Write F sampled trajectories per scene")
    predict.add_argument("--dataset", required=True)
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--seed", type=int, help=seed_help)
    predict.add_argument("--samples", type=_positive_int)
    predict.add_argument("--workers", type=_positive_int, default=1)
    predict.add_argument("--out", required=True, help="Predictions path (.jsonl)")
    predict.set_defaults(handler=cmd_predict)

    plot = sub.add_parser("plot", help="Write one SVG per scene")
    plot.add_argument("--dataset", required=True)
    plot_source = plot.add_mutually_exclusive_group()
    plot_source.add_argument("--checkpoint")
    plot_source.add_argument("--predictions")
    plot.add_argument("--seed", type=int, help=seed_help)
    plot.add_argument("--samples", type=_positive_int)
    plot.add_argument("--limit", type=_positive_int, help="Plot only the first N scenes")
    plot.add_argument("--out", required=True, help="Output directory")
    plot.set_defaults(handler=cmd_plot)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        return args.handler(args)
    except (ConfigError, SceneParamsError, MetricArgumentError, ValidationError) as e:
        logger.error(f"Bad configuration: {e}")
        return EXIT_USAGE
    except (TrainingDivergenceError, NonFiniteError) as e:
        logger.error(f"Numerical divergence: {e}")
        return EXIT_DIVERGED
    except (DatasetError, CheckpointError, OffMapError, LaneGraphError, ShapeMismatchError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
