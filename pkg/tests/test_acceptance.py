"""
Desk-scale regressions on synthetic merge scenes: training lowers the loss
and beats constant velocity, the ablation keeps its direction, and the
decoder consumes the interaction edges.
"""
import pytest

from app.config import SceneParams, TrainConfig
from app.evaluation.harness import edge_sensitivity, evaluate_baseline, evaluate_model, run_ablation
from app.ingestion.scene_synth import generate_split
from app.training import trainer
from app.training.trainer import dataset_loss, train

pytestmark = pytest.mark.slow

DESK_MODEL = {"hidden": 32, "edge_dim": 16, "pair_channels": 8, "lane_gcn_layers": 1}


@pytest.fixture(scope="module")
def merge_split():
    params = SceneParams.argoverse_like()
    return generate_split("merge", "train", 500, params), generate_split("merge", "val", 100, params)


@pytest.fixture(scope="module")
def desk_config():
    return TrainConfig(epochs=10, batch_scenes=8, lr=3e-3, train_samples=6, seed=0, max_steps=200, model=DESK_MODEL)


@pytest.fixture(scope="module")
def trained_full(merge_split, desk_config):
    train_scenes, _ = merge_split
    untrained = trainer.model_for(train_scenes, desk_config)
    start = dataset_loss(untrained, train_scenes[:100], num_samples=6)
    result = train(train_scenes, desk_config)
    return result, start


def test_training_lowers_loss_and_beats_constant_velocity(merge_split, trained_full):
    """Test 200 steps lower the total loss and val mADE_6 is below the constant-velocity baseline."""
    train_scenes, val_scenes = merge_split
    result, start = trained_full
    assert result.steps == 200
    end = dataset_loss(result.model, train_scenes[:100], num_samples=6)
    assert end.total < start.total
    model_report, _ = evaluate_model(result.model, val_scenes, ks=[1, 6], num_samples=6)
    baseline_report, _ = evaluate_baseline(val_scenes, num_samples=6, ks=[1, 6])
    assert model_report.made[6] < baseline_report.made[6]


def test_first_ranked_sample_is_no_worse_than_constant_velocity(merge_split, trained_full):
    """Test the top-ranked sample alone matches or beats the constant-velocity baseline."""
    _, val_scenes = merge_split
    result, _ = trained_full
    model_report, _ = evaluate_model(result.model, val_scenes, ks=[1], num_samples=6)
    baseline_report, _ = evaluate_baseline(val_scenes, num_samples=6, ks=[1])
    assert model_report.made[1] <= baseline_report.made[1]


def test_decoder_consumes_interaction_edges(merge_split, trained_full):
    """Test unit edge noise moves predictions by more than 1 cm on average."""
    _, val_scenes = merge_split
    result, _ = trained_full
    assert edge_sensitivity(result.model, val_scenes, noise=1.0, num_samples=6) > 0.01


def test_ablation_direction(merge_split, desk_config):
    """Test over 3 seeds the full model's median mADE_1 is no worse than no_fr and gp does not beat full's mFDE by 5%."""
    train_scenes, val_scenes = merge_split
    runs, medians = run_ablation(
        train_scenes[:200], val_scenes[:60], variants=("full", "no_fr", "gp"), seeds=(0, 1, 2),
        base_config=desk_config, ks=[1, 6],
    )
    assert len(runs) == 9
    assert medians.loc["full", "made_1"] <= medians.loc["no_fr", "made_1"]
    assert medians.loc["gp", "mfde_1"] >= 0.95 * medians.loc["full", "mfde_1"]
