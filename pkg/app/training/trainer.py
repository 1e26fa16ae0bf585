"""
Training loop for the joint objective.

Scenes are shuffled per epoch from config.seed; each batch accumulates
per-scene gradients in a fixed order and takes one Adam step, so a run is a
pure function of (scenes, config).
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.config import TrainConfig
from app.core.errors import NonFiniteError, TrainingDivergenceError
from app.core.logger import get_training_logger
from app.ingestion.scene_synth import Scene
from app.model.predictor import LaneFRMModel
from app.numkit.optim import Adam
from app.numkit.tensor import no_grad
from app.training.losses import LossReport, LossWeights, joint_loss

logger = get_training_logger()

CURVE_COLUMNS = ["step", "nll", "kl", "recon", "total"]
EPOCH_COLUMNS = ["epoch", "step", "nll", "kl", "recon", "total", "unweighted_total"]


@dataclass
class TrainingResult:
    model: LaneFRMModel
    history: pd.DataFrame
    epoch_reports: List[LossReport] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    curve_path: Optional[Path] = None
    epoch_path: Optional[Path] = None

    @property
    def steps(self) -> int:
        return len(self.history)


def loss_weights(config: TrainConfig, step: int) -> LossWeights:
    """Configured coefficients, with the KL term ramped linearly during warm-up."""
    kl = config.kl_weight
    if config.kl_warmup_steps:
        kl *= min(1.0, (step + 1) / config.kl_warmup_steps)
    return LossWeights(nll=config.nll_weight, kl=kl, recon=config.recon_weight)


def _checked(terms: Dict[str, float], step: int) -> None:
    for name, value in terms.items():
        if not np.isfinite(value):
            raise TrainingDivergenceError(name, step)


def model_for(scenes: Sequence[Scene], config: TrainConfig) -> LaneFRMModel:
    """A fresh model whose horizon matches the scenes."""
    model_config = config.model.model_copy(
        update={"past_steps": scenes[0].past_steps, "future_steps": scenes[0].future_steps}
    )
    if model_config != config.model:
        logger.debug(f"Model horizon set from data: t_p={model_config.past_steps}, t_f={model_config.future_steps}")
    return LaneFRMModel(model_config, config.ablation, seed=config.seed)


def train(
    scenes: Sequence[Scene],
    config: TrainConfig,
    checkpoint_path: Optional[Union[str, Path]] = None,
    curve_path: Optional[Union[str, Path]] = None,
    epoch_path: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    if not scenes:
        raise ValueError("train needs a non-empty train split")

    model = model_for(scenes, config)
    optimizer = Adam(lr=config.lr, grad_clip=config.grad_clip)
    prepared = [model.prepare(scene) for scene in scenes]
    rng = np.random.default_rng(config.seed)
    logger.info(
        f"🚀 Training variant '{config.variant}' on {len(scenes)} scenes "
        f"({model.store.num_values()} parameters, {config.epochs} epochs, batch {config.batch_scenes})"
    )

    rows: List[Dict[str, float]] = []
    epoch_reports: List[LossReport] = []
    step = 0
    done = False
    for epoch in range(config.epochs):
        order = rng.permutation(len(scenes))
        epoch_rows = []
        for start in range(0, len(order), config.batch_scenes):
            batch = order[start:start + config.batch_scenes]
            weights = loss_weights(config, step)
            model.store.zero_grad()
            sums = {"nll": 0.0, "kl": 0.0, "recon": 0.0, "total": 0.0}
            for index in batch:
                try:
                    outputs = model.training_forward(
                        prepared[index], config.train_samples, seed=(config.seed, step, scenes[index].seed)
                    )
                    total, terms = joint_loss(outputs, weights)
                except NonFiniteError as e:
                    raise TrainingDivergenceError(e.primitive, step, f"scene seed {scenes[index].seed}") from e
                values = {name: term.item() for name, term in terms.items()}
                values["total"] = total.item()
                _checked(values, step)
                (total * (1.0 / len(batch))).backward()
                for name, value in values.items():
                    sums[name] += value / len(batch)

            grads = model.store.grads()
            for name, grad in grads.items():
                if not np.all(np.isfinite(grad)):
                    raise TrainingDivergenceError("gradient", step, name)
            optimizer.step(model.store, grads)

            row = {"step": step, **sums}
            rows.append(row)
            epoch_rows.append(row)
            logger.debug(
                f"step {step}: nll={sums['nll']:.4f} kl={sums['kl']:.4f} "
                f"recon={sums['recon']:.4f} total={sums['total']:.4f}"
            )
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break

        means = pd.DataFrame(epoch_rows)[CURVE_COLUMNS[1:]].mean()
        report = LossReport(step=step, **{name: float(means[name]) for name in CURVE_COLUMNS[1:]})
        epoch_reports.append(report)
        logger.info(
            f"📝 Epoch {epoch + 1}/{config.epochs}: nll={report.nll:.4f} kl={report.kl:.4f} "
            f"recon={report.recon:.4f} total={report.total:.4f}"
        )
        if done:
            break

    history = pd.DataFrame(rows, columns=CURVE_COLUMNS)
    result = TrainingResult(model=model, history=history, epoch_reports=epoch_reports)
    if curve_path is not None:
        result.curve_path = write_loss_curve(history, curve_path)
    if epoch_path is not None:
        result.epoch_path = write_epoch_losses(epoch_reports, epoch_path)
    if checkpoint_path is not None:
        result.checkpoint_path = model.save(checkpoint_path, {
            "train_config": config.model_dump(mode="json"),
            "steps": step,
            "final_total": float(history["total"].iloc[-1]),
        })
        logger.info(f"✅ Saved checkpoint to {result.checkpoint_path}")
    return result


def write_loss_curve(history: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False, columns=CURVE_COLUMNS)
    return path


def write_epoch_losses(reports: Sequence[LossReport], path: Union[str, Path]) -> Path:
    """One row per epoch: mean loss terms and the step count reached."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([report.model_dump() for report in reports], columns=EPOCH_COLUMNS[1:])
    frame.insert(0, "epoch", range(1, len(frame) + 1))
    frame.to_csv(path, index=False, columns=EPOCH_COLUMNS)
    return path


def dataset_loss(
    model: LaneFRMModel,
    scenes: Sequence[Scene],
    num_samples: int,
    seed: int = 0,
    weights: Optional[LossWeights] = None,
) -> LossReport:
    """Mean loss terms over scenes with fixed sampling seeds and no gradient."""
    weights = weights or LossWeights()
    sums = {"nll": 0.0, "kl": 0.0, "recon": 0.0, "total": 0.0}
    with no_grad():
        for scene in scenes:
            total, terms = joint_loss(model.training_forward(scene, num_samples, (seed, scene.seed)), weights)
            for name, term in terms.items():
                sums[name] += term.item() / len(scenes)
            sums["total"] += total.item() / len(scenes)
    return LossReport(step=0, **sums)
