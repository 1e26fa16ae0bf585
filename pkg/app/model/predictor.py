"""
LaneFRMModel: the full predictor wired from encoders, heads and the future
relationship module, with the training-time (posterior, GT goal) and
inference-time (prior, sampled goal) forward passes.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from app.config import AblationFlags, ModelConfig
from app.core.errors import CheckpointError
from app.ingestion.scene_synth import Scene
from app.model.encoders import LaneEncoder, MotionEncoder
from app.model.features import PreparedScene, prepare_scene
from app.model.frm import (
    FutureRelationshipModule,
    InteractionEdgeSample,
    InteractionPosterior,
    InteractionPrior,
    off_diagonal_mask,
    prior_log_density,
    prior_mode_edges,
)
from app.model.heads import IntentionEncoder, TrajectoryDecoder, WaypointHead, sample_goal
from app.model.prediction import PredictionSet
from app.numkit.params import ParamStore, load_checkpoint, save_checkpoint
from app.numkit.random import Seed, derive_seed, sample_gaussian
from app.numkit.tensor import Tensor, no_grad


@dataclass
class TrainingOutputs:
    tau_pred: Tensor  # N x M x t_f
    tau_gt: np.ndarray  # N x M x t_f one-hot
    prior: InteractionPrior
    posterior: InteractionPosterior
    edges: InteractionEdgeSample
    trajectories: Tensor  # F x N x t_f x 2 world meters
    gt_future: np.ndarray  # N x t_f x 2


class LaneFRMModel:
    def __init__(
        self,
        config: Optional[ModelConfig] = None,
        ablation: Optional[AblationFlags] = None,
        store: Optional[ParamStore] = None,
        seed: int = 0,
    ):
        self.config = config or ModelConfig()
        self.ablation = ablation or AblationFlags()
        self.store = store if store is not None else ParamStore(seed)
        self.motion = MotionEncoder(self.store, self.config)
        self.lanes = LaneEncoder(self.store, self.config)
        self.waypoints = WaypointHead(self.store, self.config)
        self.intention = IntentionEncoder(self.store, self.config)
        self.frm = FutureRelationshipModule(self.store, self.config, self.ablation)
        self.decoder = TrajectoryDecoder(self.store, self.config)

    @property
    def variant(self) -> str:
        return self.ablation.variant_name

    def prepare(self, scene: Scene, with_ground_truth: bool = True) -> PreparedScene:
        return prepare_scene(scene, self.config, with_ground_truth)

    def encode(self, prepared: PreparedScene) -> Tuple[Tensor, Tensor, Tensor]:
        """(h_x past N x h, h_l M x h, predicted occupancy N x M x t_f)."""
        h_past = self.motion(prepared.past_inputs, prepared.pose)
        h_lanes = self.lanes(prepared.lane_summary, prepared.propagation)
        tau = self.waypoints(h_past, h_lanes, prepared.lane_geometry)
        return h_past, h_lanes, tau

    def _decode(self, prepared: PreparedScene, h_intention: Tensor, h_interaction: Tensor) -> Tensor:
        prior = prepared.velocity_prior if self.config.velocity_prior else None
        return self.decoder(h_intention, h_interaction, prepared.anchors, prepared.to_world, prior)

    def training_forward(self, scene: Union[Scene, PreparedScene], num_samples: int, seed: Seed) -> TrainingOutputs:
        """
        Posterior edges from GT occupancy and future motion; every sample is
        decoded with the GT goal, so all intention copies are identical.
        """
        prepared = scene if isinstance(scene, PreparedScene) else self.prepare(scene)
        if prepared.gt_occupancy is None:
            raise ValueError("training_forward needs a scene prepared with ground truth")
        h_past, h_lanes, tau_pred = self.encode(prepared)
        h_future = self.motion(prepared.future_inputs, prepared.pose)

        prior = self.frm.prior_from(tau_pred, h_past, prepared.propagation)
        posterior = self.frm.posterior_from(prepared.gt_occupancy, h_future, prepared.propagation)
        edges = self.frm.sample_posterior(posterior, derive_seed(seed, 1), num_samples)
        h_interaction = self.frm.messages(edges.z, h_past)

        goals = np.tile(prepared.gt_goal_columns[None, :], (num_samples, 1))
        h_intention = self.intention(h_past, goals, h_lanes, prepared.lane_geometry)
        return TrainingOutputs(
            tau_pred=tau_pred,
            tau_gt=prepared.gt_occupancy,
            prior=prior,
            posterior=posterior,
            edges=edges,
            trajectories=self._decode(prepared, h_intention, h_interaction),
            gt_future=prepared.gt_future,
        )

    def predict(
        self,
        scene: Scene,
        num_samples: Optional[int] = None,
        seed: Seed = 0,
        edge_noise: float = 0.0,
        mode_first: bool = True,
    ) -> PredictionSet:
        """
        F samples: goal from final-step occupancy, edges from the prior.
        With ``mode_first`` sample 0 takes each agent's most probable goal and
        the mean of each pair's most probable prior component.
        ``edge_noise`` adds that many units of Gaussian noise to every edge.
        """
        count = num_samples or self.config.num_samples
        with no_grad():
            prepared = self.prepare(scene, with_ground_truth=False)
            n = prepared.num_agents
            h_past, h_lanes, tau = self.encode(prepared)
            tau_final = tau.data[:, :, -1]
            goals = sample_goal(tau_final, count, derive_seed(seed, 0))
            prior = self.frm.prior_from(tau, h_past, prepared.propagation)
            edges = self.frm.sample_prior(prior, derive_seed(seed, 1), count)
            z, mode_ids = edges.z.data.copy(), edges.mode_ids.copy()
            if mode_first:
                mode = prior_mode_edges(prior)
                goals[0] = np.argmax(tau_final, axis=1)
                z[0], mode_ids[0] = mode.z.data[0], mode.mode_ids[0]
            goal_probs = tau_final[np.arange(n)[None, :], goals]
            if edge_noise:
                noise = sample_gaussian(z.shape, derive_seed(seed, 2)).data
                z = z + edge_noise * noise * off_diagonal_mask(n)[None, :, :, None]
            edge_scores = prior_log_density(prior, z).sum(axis=2) / max(n - 1, 1)
            h_interaction = self.frm.messages(Tensor(z), h_past)
            h_intention = self.intention(h_past, goals, h_lanes, prepared.lane_geometry)
            trajectories = self._decode(prepared, h_intention, h_interaction)

        return PredictionSet(
            trajectories=trajectories.data,
            goal_ids=prepared.segment_ids[goals],
            goal_probs=goal_probs,
            scene_seed=scene.seed,
            edges=z,
            mode_ids=mode_ids,
            edge_scores=edge_scores,
        )

    def metadata(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "model_config": self.config.model_dump(),
            "ablation": self.ablation.model_dump(),
        }

    def save(self, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
        metadata = self.metadata()
        metadata.update(extra or {})
        return save_checkpoint(self.store, path, metadata)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LaneFRMModel":
        store, metadata = load_checkpoint(path)
        try:
            config = ModelConfig.model_validate(metadata["model_config"])
            ablation = AblationFlags.model_validate(metadata["ablation"])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"{path}: checkpoint metadata lacks a valid model description ({e})") from e
        expected = len(store)
        model = cls(config, ablation, store)
        if len(model.store) != expected:
            raise CheckpointError(f"{path}: checkpoint does not match the model layout for variant '{model.variant}'")
        return model
