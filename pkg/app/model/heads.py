"""
Waypoint occupancy head, goal sampling, intention feature and trajectory decoder.
"""
from typing import Optional, Sequence, Union

import numpy as np

from app.config import ModelConfig
from app.core.errors import DanglingSegmentError, ShapeMismatchError
from app.model.features import LANE_GEOMETRY_DIM
from app.model.layers import Linear, SplitLinear
from app.numkit.params import ParamStore
from app.numkit.random import Seed, sample_gumbel
from app.numkit.tensor import Tensor, as_tensor, concat, relu, softmax


class WaypointHead:
    """
    tau = softmax over lanes of MLP([h_x_i, h_l_m, geometry_im]), one logit
    per future step, giving N x M x t_f.
    """

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "waypoint", final_init: str = "glorot"):
        h = config.hidden
        self.hidden = SplitLinear(store, f"{name}.hidden", [h, h, LANE_GEOMETRY_DIM], h)
        self.out = Linear(store, f"{name}.out", h, config.future_steps, init=final_init)

    def logits(self, h_x: Tensor, h_lanes: Tensor, geometry: np.ndarray) -> Tensor:
        n, m = h_x.shape[0], h_lanes.shape[0]
        hidden = self.hidden(h_x.reshape(n, 1, -1), h_lanes.reshape(1, m, -1), geometry)
        return self.out(relu(hidden))

    def __call__(self, h_x: Tensor, h_lanes: Tensor, geometry: np.ndarray) -> Tensor:
        return softmax(self.logits(h_x, h_lanes, geometry), axis=1)


def gumbel_argmax(probabilities: np.ndarray, seed: Seed, count: int) -> np.ndarray:
    """
    ``count`` categorical draws per row of ``probabilities`` (last axis) via
    argmax(log p + g). Zero-probability entries are never drawn.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_p = np.where(probabilities > 0.0, np.log(probabilities), -np.inf)
    noise = sample_gumbel((count,) + probabilities.shape, seed).data
    return np.argmax(log_p[None] + noise, axis=-1)


def sample_goal(
    tau_final: Union[Tensor, np.ndarray],
    count: int,
    seed: Seed,
    segment_ids: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    F x N goals drawn from each agent's final-step occupancy. Returns segment
    ids when ``segment_ids`` (column order) is given, else columns.
    """
    values = tau_final.data if isinstance(tau_final, Tensor) else np.asarray(tau_final, dtype=np.float64)
    columns = gumbel_argmax(values, seed, count)
    if segment_ids is None:
        return columns
    return np.asarray(segment_ids)[columns]


def one_hot(columns: np.ndarray, width: int) -> np.ndarray:
    columns = np.asarray(columns)
    if columns.size and (columns.min() < 0 or columns.max() >= width):
        bad = columns[(columns < 0) | (columns >= width)][0]
        raise DanglingSegmentError(f"goal column {int(bad)} is outside 0..{width - 1}")
    return np.eye(width)[columns]


class IntentionEncoder:
    """h_I[f, i] = MLP([h_x_i, h_l[goal_fi], geometry_i,goal_fi])."""

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "intention"):
        h = config.hidden
        self.hidden = SplitLinear(store, f"{name}.hidden", [h, h, LANE_GEOMETRY_DIM], h)
        self.out = Linear(store, f"{name}.out", h, h)

    def __call__(self, h_x: Tensor, goal_columns: np.ndarray, h_lanes: Tensor, geometry: np.ndarray) -> Tensor:
        goal_columns = np.asarray(goal_columns)
        n, m = h_x.shape[0], h_lanes.shape[0]
        if goal_columns.ndim != 2 or goal_columns.shape[1] != n:
            raise ShapeMismatchError("intention_feature", goal_columns.shape, (-1, n))
        selector = one_hot(goal_columns, m)  # F x N x M
        h_goal = Tensor(selector) @ h_lanes
        goal_geometry = geometry[np.arange(n)[None, :], goal_columns]  # F x N x 6
        hidden = self.hidden(h_x.reshape(1, n, -1), h_goal, goal_geometry)
        return relu(self.out(relu(hidden)))


class TrajectoryDecoder:
    """
    2-layer MLP over [h_I, h_R] emitting t_f per-step displacements in the
    agent frame, optionally as residuals over the current velocity, summed
    into positions relative to the current position.
    """

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "decoder"):
        self.future_steps = config.future_steps
        self.scale = config.position_scale
        self.hidden = Linear(store, f"{name}.hidden", config.hidden + config.edge_dim, config.hidden)
        self.out = Linear(store, f"{name}.out", config.hidden, 2 * config.future_steps)
        self._cumsum = np.tril(np.ones((config.future_steps, config.future_steps)))

    def local(self, h_intention: Tensor, h_interaction: Tensor, velocity_prior: Optional[np.ndarray] = None) -> Tensor:
        """F x N x t_f x 2 offsets from the current position, agent frame, meters."""
        if h_intention.shape[:2] != h_interaction.shape[:2]:
            raise ShapeMismatchError("decode", h_intention.shape, h_interaction.shape)
        f, n = h_intention.shape[:2]
        hidden = relu(self.hidden(concat([h_intention, h_interaction], axis=2)))
        steps = self.out(hidden).reshape(f, n, self.future_steps, 2)
        if velocity_prior is not None:
            steps = steps + np.asarray(velocity_prior).reshape(1, n, 1, 2) / self.scale
        return (Tensor(self._cumsum) @ steps) * self.scale

    def __call__(
        self,
        h_intention: Tensor,
        h_interaction: Tensor,
        anchors: np.ndarray,
        to_world: np.ndarray,
        velocity_prior: Optional[np.ndarray] = None,
    ) -> Tensor:
        """F x N x t_f x 2 world positions."""
        offsets = self.local(h_intention, h_interaction, velocity_prior)
        n = offsets.shape[1]
        return offsets @ Tensor(to_world) + np.asarray(anchors).reshape(1, n, 1, 2)
