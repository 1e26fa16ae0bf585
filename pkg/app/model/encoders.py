"""
Motion encoder (shared by past and future tracks) and lane encoder.
"""
import numpy as np

from app.config import ModelConfig
from app.core.errors import ShapeMismatchError
from app.lanes.lane_graph import RELATIONS
from app.model.features import LANE_SUMMARY_DIM, MOTION_CHANNELS, POSE_DIM
from app.model.layers import MLP, Linear, TemporalConv
from app.numkit.params import ParamStore
from app.numkit.tensor import Tensor, as_tensor, concat, relu


class MotionEncoder:
    """
    Two temporal convolutions over the T x 6 motion inputs, mean-pooled over
    time and fused with the agent's pose. The weights do not depend on T, so
    past (t_p) and future (t_f) tracks go through identical parameters.
    """

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "motion"):
        h = config.hidden
        self.allowed_lengths = {config.past_steps, config.future_steps}
        self.conv1 = TemporalConv(store, f"{name}.conv1", MOTION_CHANNELS, h, config.kernel_size)
        self.conv2 = TemporalConv(store, f"{name}.conv2", h, h, config.kernel_size)
        self.fuse = Linear(store, f"{name}.fuse", h + POSE_DIM, h)

    def __call__(self, tracks: np.ndarray, pose: np.ndarray) -> Tensor:
        tracks = as_tensor(tracks)
        if tracks.ndim != 3 or tracks.shape[2] != MOTION_CHANNELS:
            raise ShapeMismatchError("encode_motion", tracks.shape, (-1, -1, MOTION_CHANNELS))
        if tracks.shape[1] not in self.allowed_lengths:
            raise ShapeMismatchError(
                "encode_motion", tracks.shape, (tracks.shape[0], min(self.allowed_lengths), MOTION_CHANNELS),
                f"track length must be one of {sorted(self.allowed_lengths)}",
            )
        x = relu(self.conv1(tracks))
        x = relu(self.conv2(x))
        pooled = x.mean(axis=1)
        return relu(self.fuse(concat([pooled, as_tensor(pose)], axis=1)))


def typed_graph_conv(features: Tensor, propagation: np.ndarray, self_weight: Tensor, edge_weights: Tensor, bias: Tensor) -> Tensor:
    """relu(H W_0 + sum_e P_e H W_e + b) with P_e = D_e^-1 A_e stacked as 5 x M x M."""
    neighbors = Tensor(propagation) @ features  # 5 x M x h
    messages = (neighbors @ edge_weights).sum(axis=0)
    return relu(features @ self_weight + messages + bias)


class LaneEncoder:
    """Per-segment polyline summaries refined by typed-edge graph convolution."""

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "lanes"):
        h = config.hidden
        self.embed = MLP(store, f"{name}.embed", [LANE_SUMMARY_DIM, h, h], final_activation=True)
        self.layers = []
        for k in range(config.lane_gcn_layers):
            self.layers.append((
                store.create(f"{name}.gcn{k}.self", (h, h)),
                store.create(f"{name}.gcn{k}.edges", (len(RELATIONS), h, h)),
                store.create(f"{name}.gcn{k}.bias", (h,), "zeros"),
            ))

    def __call__(self, lane_summary: np.ndarray, propagation: np.ndarray) -> Tensor:
        features = self.embed(as_tensor(lane_summary))
        for self_weight, edge_weights, bias in self.layers:
            features = typed_graph_conv(features, propagation, self_weight, edge_weights, bias)
        return features
