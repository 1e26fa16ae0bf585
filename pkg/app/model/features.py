"""
Scene preprocessing: turns a Scene into the constant arrays the network reads.

With relative coordinates enabled, motion inputs are expressed in each
agent's current frame (translated to its current position, rotated to its
current heading) and scene-level positions are taken relative to the mean of
the agents' current positions, so a global translation leaves every input
unchanged.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.config import ModelConfig
from app.core.errors import ShapeMismatchError
from app.ingestion.scene_synth import Scene
from app.lanes.lane_graph import propagation_matrices
from app.lanes.occupancy import nearest_on_polyline

SPEED_SCALE = 10.0  # m/s per unit of network input
MOTION_CHANNELS = 6
POSE_DIM = 4
LANE_SUMMARY_DIM = 8
LANE_GEOMETRY_DIM = 6


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class PreparedScene:
    past_inputs: np.ndarray  # N x t_p x 6
    future_inputs: Optional[np.ndarray]  # N x t_f x 6
    pose: np.ndarray  # N x 4
    lane_summary: np.ndarray  # M x 8
    lane_geometry: np.ndarray  # N x M x 6
    propagation: np.ndarray  # 5 x M x M, D_e^-1 A_e
    anchors: np.ndarray  # N x 2 current positions, world meters
    to_world: np.ndarray  # N x 2 x 2, local row vectors @ to_world[i] -> world offsets
    velocity_prior: np.ndarray  # N x 2 last displacement in the local frame, meters per step
    segment_ids: np.ndarray  # M
    scale: float
    gt_occupancy: Optional[np.ndarray] = None  # N x M x t_f one-hot
    gt_goal_columns: Optional[np.ndarray] = None  # N
    gt_future: Optional[np.ndarray] = None  # N x t_f x 2 world meters

    @property
    def num_agents(self) -> int:
        return self.past_inputs.shape[0]

    @property
    def num_segments(self) -> int:
        return self.lane_summary.shape[0]


def motion_inputs(
    positions: np.ndarray,
    headings: np.ndarray,
    previous: np.ndarray,
    anchor: np.ndarray,
    frame: np.ndarray,
    heading0: float,
    dt: float,
    scale: float,
) -> np.ndarray:
    """T x 6: position, velocity and heading (cos, sin) in the agent frame."""
    displacement = np.diff(np.concatenate([previous[None, :], positions], axis=0), axis=0)
    local = (positions - anchor) @ frame / scale
    velocity = displacement @ frame / (dt * SPEED_SCALE)
    relative = headings - heading0
    return np.concatenate([local, velocity, np.cos(relative)[:, None], np.sin(relative)[:, None]], axis=1)


def prepare_scene(scene: Scene, config: ModelConfig, with_ground_truth: bool = True) -> PreparedScene:
    if scene.past_steps != config.past_steps or scene.future_steps != config.future_steps:
        raise ShapeMismatchError(
            "encode_motion",
            (scene.past_steps, scene.future_steps),
            (config.past_steps, config.future_steps),
            "scene horizon does not match the model configuration",
        )
    scale = config.position_scale
    relative = config.relative_coordinates
    n = scene.num_agents
    anchors = np.stack([agent.current_position for agent in scene.agents])
    thetas = np.array([agent.current_heading for agent in scene.agents])
    origin = anchors.mean(axis=0) if relative else np.zeros(2)

    past_inputs, future_inputs, frames, velocity_prior = [], [], [], []
    for i, agent in enumerate(scene.agents):
        frame = rotation(thetas[i]) if relative else np.eye(2)
        anchor = anchors[i] if relative else np.zeros(2)
        heading0 = thetas[i] if relative else 0.0
        frames.append(frame)
        past_inputs.append(motion_inputs(
            agent.past, agent.past_headings, agent.past[0], anchor, frame, heading0, scene.dt, scale
        ))
        future_inputs.append(motion_inputs(
            agent.future, agent.future_headings, agent.past[-1], anchor, frame, heading0, scene.dt, scale
        ))
        last_step = agent.past[-1] - agent.past[-2] if len(agent.past) >= 2 else np.zeros(2)
        velocity_prior.append(last_step @ frame)

    pose = np.concatenate([(anchors - origin) / scale, np.cos(thetas)[:, None], np.sin(thetas)[:, None]], axis=1)

    segments = scene.graph.segments
    summary = np.zeros((len(segments), LANE_SUMMARY_DIM))
    geometry = np.zeros((n, len(segments), LANE_GEOMETRY_DIM))
    for m, segment in enumerate(segments):
        points = segment.points
        heading = segment.heading
        summary[m] = [
            *((points[0] - origin) / scale),
            *((points[-1] - origin) / scale),
            np.cos(heading),
            np.sin(heading),
            segment.length / scale,
            0.0 if segment.intersection_id is None else 1.0,
        ]
        for i in range(n):
            nearest, _, tangent = nearest_on_polyline(anchors[i], points)
            frame = frames[i]
            anchor = anchors[i] if relative else np.zeros(2)
            geometry[i, m] = [
                *((nearest - anchor) @ frame / scale),
                *((points[-1] - anchor) @ frame / scale),
                *(tangent @ frame),
            ]

    prepared = PreparedScene(
        past_inputs=np.stack(past_inputs),
        future_inputs=np.stack(future_inputs),
        pose=pose,
        lane_summary=summary,
        lane_geometry=geometry,
        propagation=propagation_matrices(scene.graph),
        anchors=anchors,
        to_world=np.stack([f.T for f in frames]),
        velocity_prior=np.stack(velocity_prior),
        segment_ids=np.asarray(scene.graph.ids),
        scale=scale,
    )
    if with_ground_truth:
        occupancy = scene.gt_occupancy().values
        prepared.gt_occupancy = occupancy
        prepared.gt_goal_columns = np.argmax(occupancy[:, :, -1], axis=1)
        prepared.gt_future = scene.future_array()
    return prepared
