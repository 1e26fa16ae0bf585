"""
Tests for the training loop, checkpoints and loss curves.
"""
import json

import numpy as np
import pandas as pd
import pytest

from app.config import AblationFlags, SceneParams, TrainConfig, load_train_config
from app.core.errors import ConfigError, TrainingDivergenceError
from app.ingestion.scene_synth import generate_scenes
from app.model.predictor import LaneFRMModel
from app.numkit.tensor import Tensor
from app.training import trainer
from app.training.losses import LossWeights
from app.training.trainer import CURVE_COLUMNS, EPOCH_COLUMNS, dataset_loss, loss_weights, train


@pytest.fixture
def quick_config(small_config):
    return TrainConfig(epochs=2, batch_scenes=2, lr=5e-3, train_samples=2, seed=3, max_steps=3, model=small_config)


def test_training_is_deterministic(short_merge_scenes, quick_config):
    """Test two runs with one config and dataset give identical loss histories and weights."""
    first = train(short_merge_scenes, quick_config)
    second = train(short_merge_scenes, quick_config)
    pd.testing.assert_frame_equal(first.history, second.history)
    for name, values in first.model.store.state_dict().items():
        assert np.array_equal(values, second.model.store.get(name).data)


def test_history_and_curve(tmp_path, short_merge_scenes, quick_config):
    """Test max_steps bounds the run and the curve CSV has one row per step."""
    result = train(short_merge_scenes, quick_config, curve_path=tmp_path / "curve.csv")
    assert result.steps == 3
    curve = pd.read_csv(result.curve_path)
    assert list(curve.columns) == CURVE_COLUMNS
    assert curve["step"].tolist() == [0, 1, 2]
    assert np.all(np.isfinite(curve[["nll", "kl", "recon", "total"]].to_numpy()))
    assert len(result.epoch_reports) == 2


def test_epoch_losses_file(tmp_path, short_merge_scenes, quick_config):
    """Test one CSV row per epoch matching the in-memory reports."""
    result = train(short_merge_scenes, quick_config, epoch_path=tmp_path / "epoch_losses.csv")
    epochs = pd.read_csv(result.epoch_path)
    assert list(epochs.columns) == EPOCH_COLUMNS
    assert epochs["epoch"].tolist() == [1, 2]
    assert epochs["step"].tolist() == [report.step for report in result.epoch_reports]
    np.testing.assert_allclose(epochs["total"], [report.total for report in result.epoch_reports], rtol=1e-12)
    np.testing.assert_allclose(epochs["unweighted_total"], epochs[["nll", "kl", "recon"]].sum(axis=1), rtol=1e-12)


def test_model_horizon_follows_scenes(short_merge_scenes, quick_config):
    """Test the trained model takes t_p and t_f from the data."""
    result = train(short_merge_scenes, quick_config)
    assert result.model.config.future_steps == short_merge_scenes[0].future_steps
    assert result.model.config.past_steps == short_merge_scenes[0].past_steps


def test_variant_is_recorded_in_checkpoint(tmp_path, short_merge_scenes, quick_config):
    """Test the no_fr variant is written to and restored from the checkpoint."""
    config = quick_config.model_copy(update={"ablation": AblationFlags.preset("no_fr")})
    result = train(short_merge_scenes, config, checkpoint_path=tmp_path / "no_fr.json")
    metadata = json.loads(result.checkpoint_path.read_text())["metadata"]
    assert metadata["variant"] == "no_fr"
    assert metadata["steps"] == 3

    loaded = LaneFRMModel.load(result.checkpoint_path)
    assert loaded.variant == "no_fr"
    scene = short_merge_scenes[0]
    original = result.model.predict(scene, num_samples=2, seed=1)
    restored = loaded.predict(scene, num_samples=2, seed=1)
    assert np.array_equal(original.trajectories, restored.trajectories)


def test_non_finite_loss_raises_divergence(monkeypatch, short_merge_scenes, quick_config):
    """Test a non-finite loss term stops training with the term and step."""
    def exploding(outputs, weights):
        return Tensor(np.inf), {"nll": Tensor(1.0), "kl": Tensor(np.inf), "recon": Tensor(1.0)}

    monkeypatch.setattr(trainer, "joint_loss", exploding)
    with pytest.raises(TrainingDivergenceError) as info:
        train(short_merge_scenes, quick_config)
    assert info.value.term == "kl"
    assert info.value.step == 0


def test_empty_train_split_is_rejected(quick_config):
    """Test training needs scenes."""
    with pytest.raises(ValueError):
        train([], quick_config)


def test_kl_warmup():
    """Test the KL weight ramps linearly to its configured value."""
    config = TrainConfig(kl_weight=2.0, kl_warmup_steps=4)
    assert [loss_weights(config, step).kl for step in range(5)] == [0.5, 1.0, 1.5, 2.0, 2.0]
    assert loss_weights(TrainConfig(), 0).kl == 1.0


def test_dataset_loss_is_finite(short_merge_scenes, short_config):
    """Test evaluation-mode losses are finite and total is the weighted sum."""
    report = dataset_loss(LaneFRMModel(short_config), short_merge_scenes, num_samples=2)
    assert np.isfinite(report.total)
    assert report.total == pytest.approx(report.nll + report.kl + report.recon, rel=1e-9)
    assert report.unweighted_total == pytest.approx(report.total, rel=1e-9)


def test_weighted_total_differs_from_unweighted(short_merge_scenes, short_config):
    """Test total applies the loss weights while unweighted_total is the plain sum."""
    weights = LossWeights(nll=2.0, kl=0.0, recon=0.5)
    report = dataset_loss(LaneFRMModel(short_config), short_merge_scenes, num_samples=2, weights=weights)
    assert report.total == pytest.approx(2.0 * report.nll + 0.5 * report.recon, rel=1e-9)
    assert report.unweighted_total == pytest.approx(report.nll + report.kl + report.recon, rel=1e-12)
    assert report.model_dump()["unweighted_total"] == report.unweighted_total


def test_train_config_file(tmp_path):
    """Test config files load into a TrainConfig and bad ones raise ConfigError."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"epochs": 3, "ablation": {"symmetric": True}, "model": {"hidden": 16}}))
    config = load_train_config(path)
    assert config.epochs == 3 and config.variant == "sym" and config.model.hidden == 16

    path.write_text(json.dumps({"lr": -1.0}))
    with pytest.raises(ConfigError):
        load_train_config(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_train_config(path)


def test_unknown_variant_preset():
    """Test an unknown variant name is a config error."""
    with pytest.raises(ConfigError):
        AblationFlags.preset("everything")


@pytest.mark.slow
def test_training_reduces_loss():
    """Test a short desk-scale run lowers the joint loss and beats its untrained self."""
    params = SceneParams.argoverse_like()
    train_scenes = generate_scenes("merge", range(32), params)
    config = TrainConfig(epochs=15, batch_scenes=8, lr=3e-3, train_samples=3, seed=0,
                         model={"hidden": 16, "edge_dim": 8, "pair_channels": 8, "lane_gcn_layers": 1})
    untrained = dataset_loss(trainer.model_for(train_scenes, config), train_scenes, num_samples=3)
    result = train(train_scenes, config)
    trained = dataset_loss(result.model, train_scenes, num_samples=3)
    assert result.epoch_reports[-1].total < result.epoch_reports[0].total
    assert trained.total < untrained.total
