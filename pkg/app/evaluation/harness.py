"""
Evaluation harness: F-sample prediction over a split, per-agent metric
tables, dataset aggregation and the ablation sweep.

Aggregation sorts the per-agent table by (scene_seed, agent) and sums with
math.fsum, so reports do not depend on scene order or worker count.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.config import VARIANT_NAMES, AblationFlags, TrainConfig
from app.core.errors import DatasetError, ShapeMismatchError
from app.core.logger import get_eval_logger
from app.evaluation.baseline import constant_velocity_baseline
from app.evaluation.metrics import (
    MISS_THRESHOLD,
    MetricsReport,
    MissRule,
    agent_ade,
    agent_fde,
    agent_misses,
)
from app.ingestion.scene_synth import Scene
from app.model.prediction import PredictionSet
from app.model.predictor import LaneFRMModel

logger = get_eval_logger()

BASELINE_VARIANT = "constant_velocity"


def default_ks(num_samples: int) -> Tuple[int, ...]:
    """k = 1, 5 and F, whichever fit in F samples."""
    return tuple(sorted({k for k in (1, 5, num_samples) if 1 <= k <= num_samples}))


def _by_seed(predictions: Sequence[PredictionSet]) -> Dict[int, PredictionSet]:
    indexed: Dict[int, PredictionSet] = {}
    for prediction in predictions:
        if prediction.scene_seed in indexed:
            raise DatasetError(f"Two prediction sets for scene seed {prediction.scene_seed}")
        indexed[prediction.scene_seed] = prediction
    return indexed


def agent_table(
    scenes: Sequence[Scene],
    predictions: Sequence[PredictionSet],
    ks: Sequence[int],
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> pd.DataFrame:
    """
    One row per (scene, agent) with ade_k, fde_k and miss_k columns. Samples
    are taken in ranked order, so k = 1 is the most probable goal.
    """
    indexed = _by_seed(predictions)
    rows: List[Dict[str, float]] = []
    for scene in scenes:
        if scene.seed not in indexed:
            raise DatasetError(f"No prediction for scene seed {scene.seed}")
        prediction = indexed[scene.seed]
        gt = scene.future_array()  # N x t_f x 2
        samples = np.swapaxes(prediction.ranked(), 0, 1)  # N x F x t_f x 2
        if samples.shape[0] != gt.shape[0] or samples.shape[2:] != gt.shape[1:]:
            raise ShapeMismatchError("evaluate", samples.shape, gt.shape, f"scene seed {scene.seed}")
        columns: Dict[str, np.ndarray] = {}
        for k in ks:
            columns[f"ade_{k}"] = agent_ade(samples, gt, k)
            columns[f"fde_{k}"] = agent_fde(samples, gt, k)
            columns[f"miss_{k}"] = agent_misses(samples, gt, k, threshold, rule).astype(np.float64)
        for agent in range(gt.shape[0]):
            row = {"scene_seed": scene.seed, "agent": agent}
            row.update({name: float(values[agent]) for name, values in columns.items()})
            rows.append(row)
    table = pd.DataFrame(rows)
    if table.empty:
        return table
    return table.sort_values(["scene_seed", "agent"], kind="stable").reset_index(drop=True)


def summarize(
    table: pd.DataFrame,
    ks: Sequence[int],
    variant: str,
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> MetricsReport:
    """Per-agent means of every column, each agent weighted equally."""
    count = len(table)
    if count == 0:
        raise DatasetError("Nothing to evaluate: no agents")

    def mean(column: str) -> float:
        return math.fsum(table[column].tolist()) / count

    return MetricsReport(
        made={k: mean(f"ade_{k}") for k in ks},
        mfde={k: mean(f"fde_{k}") for k in ks},
        miss_rate={k: mean(f"miss_{k}") for k in ks},
        mfde_1=mean("fde_1") if 1 in ks else 0.0,
        num_agents=count,
        variant=variant,
        miss_threshold=threshold,
        miss_rule=rule,
    )


def evaluate_predictions(
    scenes: Sequence[Scene],
    predictions: Sequence[PredictionSet],
    ks: Optional[Sequence[int]] = None,
    variant: str = "full",
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> Tuple[MetricsReport, pd.DataFrame]:
    if not predictions:
        raise DatasetError("Nothing to evaluate: no predictions")
    ks = tuple(ks) if ks else default_ks(min(p.num_samples for p in predictions))
    table = agent_table(scenes, predictions, ks, threshold, rule)
    report = summarize(table, ks, variant, threshold, rule)
    logger.info(
        f"📊 {variant}: " + " ".join(f"mADE_{k}={report.made[k]:.3f} mFDE_{k}={report.mfde[k]:.3f}" for k in ks)
        + f" over {report.num_agents} agents"
    )
    return report, table


def predict_scenes(
    model: LaneFRMModel,
    scenes: Sequence[Scene],
    num_samples: Optional[int] = None,
    seed: int = 0,
    workers: int = 1,
    edge_noise: float = 0.0,
) -> List[PredictionSet]:
    """Predictions in scene order; each scene is sampled from (seed, scene.seed)."""
    def run(scene: Scene) -> PredictionSet:
        return model.predict(scene, num_samples, seed=(seed, scene.seed), edge_noise=edge_noise)

    if workers <= 1:
        return [run(scene) for scene in scenes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, scenes))


def evaluate_model(
    model: LaneFRMModel,
    scenes: Sequence[Scene],
    ks: Optional[Sequence[int]] = None,
    num_samples: Optional[int] = None,
    seed: int = 0,
    workers: int = 1,
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> Tuple[MetricsReport, pd.DataFrame]:
    predictions = predict_scenes(model, scenes, num_samples, seed, workers)
    return evaluate_predictions(scenes, predictions, ks, model.variant, threshold, rule)


def evaluate_baseline(
    scenes: Sequence[Scene],
    num_samples: int = 6,
    ks: Optional[Sequence[int]] = None,
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> Tuple[MetricsReport, pd.DataFrame]:
    predictions = [constant_velocity_baseline(scene, num_samples) for scene in scenes]
    return evaluate_predictions(scenes, predictions, ks, BASELINE_VARIANT, threshold, rule)


def write_report(report: MetricsReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_report(path: Union[str, Path]) -> MetricsReport:
    return MetricsReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_agent_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.12g")
    return path


def edge_sensitivity(
    model: LaneFRMModel,
    scenes: Sequence[Scene],
    seed: int = 0,
    noise: float = 1.0,
    num_samples: Optional[int] = None,
) -> float:
    """
    Mean displacement between predictions with and without Gaussian noise of
    scale ``noise`` on every interaction edge; goals and edge samples are
    shared between the two runs.
    """
    shifts: List[float] = []
    for scene in scenes:
        clean = model.predict(scene, num_samples, seed=(seed, scene.seed))
        noisy = model.predict(scene, num_samples, seed=(seed, scene.seed), edge_noise=noise)
        shifts.extend(np.linalg.norm(noisy.trajectories - clean.trajectories, axis=-1).ravel().tolist())
    if not shifts:
        raise DatasetError("edge_sensitivity needs at least one scene")
    shift = math.fsum(shifts) / len(shifts)
    logger.info(f"🔍 Edge sensitivity of '{model.variant}': mean shift {shift:.4f} m at noise {noise}")
    return shift


def run_ablation(
    train_scenes: Sequence[Scene],
    val_scenes: Sequence[Scene],
    variants: Sequence[str] = VARIANT_NAMES,
    seeds: Sequence[int] = (0, 1, 2),
    base_config: Optional[TrainConfig] = None,
    ks: Optional[Sequence[int]] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Train and evaluate every variant for every seed.

    Returns (runs, medians): one row per (variant, seed) and the per-variant
    medians over seeds, in ``variants`` order.
    """
    from app.training.trainer import train

    base_config = base_config or TrainConfig()
    rows = []
    for variant in variants:
        for seed in seeds:
            config = base_config.model_copy(update={"ablation": AblationFlags.preset(variant), "seed": seed})
            result = train(train_scenes, config)
            report, _ = evaluate_model(result.model, val_scenes, ks, seed=seed)
            row = {"variant": variant, "seed": seed, "mfde_1": report.mfde_1}
            for k in report.made:
                row[f"made_{k}"] = report.made[k]
                row[f"mfde_{k}"] = report.mfde[k]
                row[f"miss_rate_{k}"] = report.miss_rate[k]
            rows.append(row)
            logger.info(f"📝 Ablation {variant} seed {seed}: mADE_1={row.get('made_1', float('nan')):.3f}")
    runs = pd.DataFrame(rows)
    medians = runs.drop(columns="seed").groupby("variant", sort=False).median()
    return runs, medians.reindex(list(variants))
