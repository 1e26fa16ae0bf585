"""
Displacement metrics over the first k samples of each agent.

Predictions are F x t_f x 2 for one agent or A x F x t_f x 2 for a batch of
agents; ground truth is t_f x 2 or A x t_f x 2 to match.
"""
from typing import Dict, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import MetricArgumentError, ShapeMismatchError

MISS_THRESHOLD = 2.0
MissRule = Literal["final", "any"]


class MetricsReport(BaseModel):
    """Dataset-level metrics keyed by k; agents are weighted equally."""
    model_config = ConfigDict(frozen=True)

    made: Dict[int, float] = Field(default_factory=dict)
    mfde: Dict[int, float] = Field(default_factory=dict)
    miss_rate: Dict[int, float] = Field(default_factory=dict)
    mfde_1: float = Field(default=0.0, ge=0.0, description="FDE of the first-ranked sample")
    num_agents: int = Field(default=0, ge=0)
    variant: str = "full"
    miss_threshold: float = Field(default=MISS_THRESHOLD, gt=0.0)
    miss_rule: MissRule = "final"

    @model_validator(mode="after")
    def _check_ranges(self) -> "MetricsReport":
        for name in ("made", "mfde"):
            for k, value in getattr(self, name).items():
                if value < 0.0:
                    raise ValueError(f"{name}[{k}] is negative: {value}")
        for k, value in self.miss_rate.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"miss_rate[{k}] outside [0, 1]: {value}")
        return self

    def is_monotone(self, atol: float = 1e-12) -> bool:
        """Every metric is non-increasing in k."""
        for values in (self.made, self.mfde, self.miss_rate):
            ordered = [values[k] for k in sorted(values)]
            if any(later > earlier + atol for earlier, later in zip(ordered, ordered[1:])):
                return False
        return True


def _batched(predictions: np.ndarray, gt: np.ndarray, k: int):
    predictions = np.asarray(predictions, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    single = predictions.ndim == 3
    if single:
        predictions, gt = predictions[None], gt[None]
    if predictions.ndim != 4 or predictions.shape[-1] != 2:
        raise ShapeMismatchError("metric", predictions.shape, (-1, -1, -1, 2))
    if gt.shape != (predictions.shape[0],) + predictions.shape[2:]:
        raise ShapeMismatchError("metric", predictions.shape, gt.shape)
    num_samples = predictions.shape[1]
    if not 1 <= k <= num_samples:
        raise MetricArgumentError(f"k must be in [1, {num_samples}], got {k}")
    return predictions[:, :k], gt, single


def displacements(predictions: np.ndarray, gt: np.ndarray, k: int) -> np.ndarray:
    """A x k x t_f pointwise Euclidean distances of the first k samples."""
    predictions, gt, _ = _batched(predictions, gt, k)
    return np.linalg.norm(predictions - gt[:, None], axis=-1)


def agent_ade(predictions: np.ndarray, gt: np.ndarray, k: int) -> np.ndarray:
    """Per-agent minimum over k samples of the mean displacement."""
    return displacements(predictions, gt, k).mean(axis=2).min(axis=1)


def agent_fde(predictions: np.ndarray, gt: np.ndarray, k: int) -> np.ndarray:
    """Per-agent minimum over k samples of the final-step displacement."""
    return displacements(predictions, gt, k)[:, :, -1].min(axis=1)


def agent_misses(
    predictions: np.ndarray,
    gt: np.ndarray,
    k: int,
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> np.ndarray:
    """
    Per-agent miss flags. Under ``final`` the best final-step displacement is
    compared; under ``any`` a sample hits only if every step is within the
    threshold. A distance equal to the threshold is a hit.
    """
    if threshold <= 0:
        raise MetricArgumentError(f"miss threshold must be positive, got {threshold}")
    dist = displacements(predictions, gt, k)
    if rule == "final":
        best = dist[:, :, -1].min(axis=1)
    elif rule == "any":
        best = dist.max(axis=2).min(axis=1)
    else:
        raise MetricArgumentError(f"unknown miss rule '{rule}'")
    return best > threshold


def min_ade(predictions: np.ndarray, gt: np.ndarray, k: int) -> float:
    return float(agent_ade(predictions, gt, k).mean())


def min_fde(predictions: np.ndarray, gt: np.ndarray, k: int) -> float:
    return float(agent_fde(predictions, gt, k).mean())


def miss_rate(
    predictions: np.ndarray,
    gt: np.ndarray,
    k: int,
    threshold: float = MISS_THRESHOLD,
    rule: MissRule = "final",
) -> float:
    """Fraction of agents whose best-of-k displacement exceeds ``threshold``."""
    return float(agent_misses(predictions, gt, k, threshold, rule).mean())
