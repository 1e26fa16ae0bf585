"""
PredictionSet: F sampled futures per agent plus the samples that produced them.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.errors import ShapeMismatchError


@dataclass
class PredictionSet:
    trajectories: np.ndarray  # F x N x t_f x 2, world meters
    goal_ids: np.ndarray  # F x N segment ids, -1 when no goal was sampled
    goal_probs: np.ndarray  # F x N probability of the sampled goal
    scene_seed: int = 0
    edges: Optional[np.ndarray] = None  # F x N x N x d
    mode_ids: Optional[np.ndarray] = None  # F x N x N
    edge_norms: Optional[np.ndarray] = None  # F x N x N, ||z_e|| per ordered pair
    edge_scores: Optional[np.ndarray] = None  # F x N, mean prior log density of each agent's incoming edges

    def __post_init__(self) -> None:
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        if self.trajectories.ndim != 4 or self.trajectories.shape[-1] != 2:
            raise ShapeMismatchError("prediction_set", self.trajectories.shape, (-1, -1, -1, 2))
        f, n = self.trajectories.shape[:2]
        self.goal_ids = np.asarray(self.goal_ids, dtype=np.int64).reshape(f, n)
        self.goal_probs = np.asarray(self.goal_probs, dtype=np.float64).reshape(f, n)
        if self.edges is not None and self.edge_norms is None:
            self.edge_norms = np.linalg.norm(self.edges, axis=-1)
        if self.edge_scores is not None:
            self.edge_scores = np.asarray(self.edge_scores, dtype=np.float64).reshape(f, n)

    @property
    def num_samples(self) -> int:
        return self.trajectories.shape[0]

    @property
    def num_agents(self) -> int:
        return self.trajectories.shape[1]

    @property
    def future_steps(self) -> int:
        return self.trajectories.shape[2]

    def for_agent(self, agent: int) -> np.ndarray:
        """F x t_f x 2 samples of one agent, in stored order."""
        return self.trajectories[:, agent]

    def ranking(self) -> np.ndarray:
        """
        F x N sample order per agent, most probable goal first. Samples that
        share a goal probability are ordered by edge score when there is one,
        then by stored order.
        """
        if self.edge_scores is None:
            return np.argsort(-self.goal_probs, axis=0, kind="stable")
        return np.lexsort((-self.edge_scores, -self.goal_probs), axis=0)

    def ranked(self) -> np.ndarray:
        """Trajectories reordered per agent by descending goal probability."""
        order = self.ranking()
        agents = np.arange(self.num_agents)[None, :]
        return self.trajectories[order, agents]
