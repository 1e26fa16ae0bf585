"""
Shared fixtures: small model configs and generated scenes.
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

os.environ.setdefault("LANEFRM_LOG_TO_FILE", "false")
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import ModelConfig, SceneParams  # noqa: E402
from app.ingestion.scene_synth import AgentTrack, Scene, generate_scene  # noqa: E402
from app.lanes.lane_graph import LaneSegment, build_graph  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """A narrow model that keeps gradient checks and training tests fast."""
    return ModelConfig(hidden=8, edge_dim=4, num_modes=2, num_samples=3, pair_channels=4, lane_gcn_layers=1)


@pytest.fixture
def short_params():
    return SceneParams(num_agents=2, past_steps=4, future_steps=6, dt=0.5)


@pytest.fixture
def short_config(small_config, short_params):
    return small_config.matching(short_params)


@pytest.fixture
def merge_scene():
    return generate_scene("merge", 0)


@pytest.fixture
def short_merge_scenes(short_params):
    return [generate_scene("merge", seed, short_params) for seed in range(4)]


@pytest.fixture
def two_lane_graph():
    """Two parallel eastbound lanes, 0 at y=0 and 1 at y=3.5."""
    return build_graph(
        [LaneSegment(0, ((0.0, 0.0), (100.0, 0.0))), LaneSegment(1, ((0.0, 3.5), (100.0, 3.5)))],
        {"left_neighbor": [(0, 1)]},
    )


def translate_scene(scene: Scene, offset) -> Scene:
    """Copy of ``scene`` with every coordinate shifted by ``offset``."""
    offset = np.asarray(offset, dtype=np.float64)
    segments = [
        LaneSegment(s.id, tuple(tuple(p + offset) for p in s.points), s.intersection_id)
        for s in scene.graph.segments
    ]
    graph = build_graph(segments, {relation: list(pairs) for relation, pairs in scene.graph.edges.items()})
    agents = [
        AgentTrack(agent_id=a.agent_id, past=a.past + offset, future=a.future + offset, headings=a.headings.copy())
        for a in scene.agents
    ]
    return Scene(graph, agents, scene.dt, scene.scenario_kind, scene.seed, scene.interaction_mode)
