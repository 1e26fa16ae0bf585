"""Constant-velocity extrapolation, the yardstick every trained variant must beat."""
import numpy as np

from app.ingestion.scene_synth import Scene
from app.model.prediction import PredictionSet


def constant_velocity_baseline(scene: Scene, num_samples: int = 1) -> PredictionSet:
    """
    Repeat each agent's last past displacement for t_f steps. A single-point
    past gives a zero-velocity rollout. All F samples are identical.
    """
    past = scene.past_array()  # N x t_p x 2
    if past.shape[1] >= 2:
        step = past[:, -1] - past[:, -2]
    else:
        step = np.zeros_like(past[:, -1])
    offsets = np.arange(1, scene.future_steps + 1, dtype=np.float64)
    rollout = past[:, -1][:, None, :] + offsets[None, :, None] * step[:, None, :]
    trajectories = np.repeat(rollout[None], num_samples, axis=0)
    shape = (num_samples, scene.num_agents)
    return PredictionSet(
        trajectories=trajectories,
        goal_ids=np.full(shape, -1),
        goal_probs=np.full(shape, 1.0 / num_samples),
        scene_seed=scene.seed,
    )
