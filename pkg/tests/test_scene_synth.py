"""
Tests for synthetic scene generation.
"""
import numpy as np
import pytest

from app.config import SceneParams
from app.core.errors import SceneParamsError
from app.ingestion.dataset import scene_to_record
from app.ingestion.scene_synth import (
    InteractionMode,
    ScenarioKind,
    generate_scene,
    generate_scenes,
    generate_split,
    interaction_window,
    split_seeds,
)
from app.lanes.occupancy import occupied_segments


@pytest.mark.parametrize("kind", ["merge", "intersection", "follow"])
def test_same_seed_same_scene(kind):
    """Test a scene is a pure function of kind, seed and params."""
    assert scene_to_record(generate_scene(kind, 17)) == scene_to_record(generate_scene(kind, 17))
    assert scene_to_record(generate_scene(kind, 17)) != scene_to_record(generate_scene(kind, 18))


@pytest.mark.parametrize("kind", ["merge", "intersection", "follow"])
def test_scene_shapes_and_projection(kind):
    """Test tracks have the configured lengths and every future lies on the map."""
    params = SceneParams(num_agents=3, past_steps=5, future_steps=8, dt=0.5)
    scene = generate_scene(kind, 3, params)
    assert scene.scenario_kind is ScenarioKind(kind)
    assert scene.past_array().shape == (3, 5, 2)
    assert scene.future_array().shape == (3, 8, 2)
    assert all(len(agent.headings) == 13 for agent in scene.agents)
    occupancy = scene.gt_occupancy()
    assert occupancy.values.shape == (3, scene.graph.num_segments, 8)
    assert occupancy.is_valid()
    assert len(scene.gt_goal_ids()) == 3


def test_follower_stays_behind_leader():
    """Test in car-following the follower's segment never passes the leader's."""
    for seed in range(5):
        scene = generate_scene("follow", seed)
        ids = scene.gt_occupancy().segment_ids(scene.graph)
        assert np.all(ids[1] <= ids[0])
        gaps = scene.agents[0].future[:, 0] - scene.agents[1].future[:, 0]
        assert np.all(gaps > 0.0)


def test_follow_modes_change_the_leader():
    """Test the leader brakes when yielding and speeds up when surpassing."""
    seen = set()
    for seed in range(20):
        scene = generate_scene("follow", seed)
        leader = scene.agents[0]
        start_speed = np.linalg.norm(leader.past[-1] - leader.past[-2])
        end_speed = np.linalg.norm(leader.future[-1] - leader.future[-2])
        if scene.interaction_mode is InteractionMode.YIELD:
            assert end_speed < start_speed
        else:
            assert end_speed > start_speed
        seen.add(scene.interaction_mode)
    assert seen == {InteractionMode.YIELD, InteractionMode.SURPASS}


@pytest.mark.slow
def test_merge_modes_are_balanced():
    """Test over 1000 merge seeds each interaction mode has frequency of at least 20%."""
    params = SceneParams(num_agents=2, past_steps=2, future_steps=2, dt=0.5)
    modes = [generate_scene("merge", seed, params).interaction_mode for seed in range(1000)]
    yields = sum(mode is InteractionMode.YIELD for mode in modes) / len(modes)
    assert 0.2 <= yields <= 0.8


def test_merge_mode_decides_who_arrives_first():
    """Test the mode decides which agent is ahead on the merged road at the horizon."""
    for seed in range(10):
        scene = generate_scene("merge", seed)
        main_x = scene.agents[0].future[-1, 0]
        ramp_x = scene.agents[1].future[-1, 0]
        if scene.interaction_mode is InteractionMode.YIELD:
            assert main_x > ramp_x
        else:
            assert ramp_x > main_x


def test_split_seeds_are_disjoint():
    """Test train and val seed ranges never overlap."""
    train = set(split_seeds("train", 500))
    val = set(split_seeds("val", 500))
    assert len(train) == 500 and len(val) == 500
    assert train.isdisjoint(val)
    with pytest.raises(SceneParamsError):
        split_seeds("test", 5)


def test_generate_split_uses_split_seeds(short_params):
    """Test split generation follows the split's seed range."""
    scenes = generate_split("merge", "val", 2, short_params)
    assert [scene.seed for scene in scenes] == split_seeds("val", 2)


def test_threaded_generation_matches_serial(short_params):
    """Test worker threads do not change scenes or their order."""
    serial = generate_scenes("intersection", [4, 5, 6], short_params)
    threaded = generate_scenes("intersection", [4, 5, 6], short_params, workers=3)
    assert [scene_to_record(s) for s in serial] == [scene_to_record(s) for s in threaded]


@pytest.mark.parametrize(
    "params",
    [
        {"num_agents": 1},
        {"num_agents": 9},
        {"past_steps": 1},
        {"future_steps": 30},
        {"dt": 0.0},
        {"dt": 0.6},
    ],
)
def test_out_of_range_params_are_rejected(params):
    """Test parameters outside their bounds raise SceneParamsError."""
    with pytest.raises(SceneParamsError):
        generate_scene("merge", 0, params)


def test_unknown_kind_is_rejected():
    """Test an unknown scenario kind is a parameter error."""
    with pytest.raises(SceneParamsError):
        generate_scene("roundabout", 0)


def test_merge_scenes_interact():
    """Test at least one of 20 merge scenes has a non-empty interaction window."""
    windows = [interaction_window(generate_scene("merge", seed), 0, 1) for seed in range(20)]
    assert any(windows)
    assert all(all(0 <= t < 12 for t in window) for window in windows)


def test_full_track_projection_covers_every_position(merge_scene):
    """Test projecting a whole track gives one id per past and future position."""
    agent = merge_scene.agents[1]
    ids = occupied_segments(agent.positions, agent.headings, merge_scene.graph)
    assert len(ids) == merge_scene.past_steps + merge_scene.future_steps
    assert set(ids) <= set(merge_scene.graph.ids)
