"""
Tests for ParamStore, Adam and checkpoint files.
"""
import json

import numpy as np
import pytest

from app.core.errors import CheckpointError, CheckpointVersionError, ShapeMismatchError
from app.numkit.optim import Adam
from app.numkit.params import ParamStore, load_checkpoint, save_checkpoint


def _store(seed: int = 0) -> ParamStore:
    store = ParamStore(seed)
    store.create("layer.weight", (3, 2))
    store.create("layer.bias", (2,), "zeros")
    store.create("smooth", (2, 3, 3), "identity")
    return store


def _quadratic_step(store: ParamStore, optimizer: Adam) -> None:
    store.zero_grad()
    weight = store.get("layer.weight")
    loss = (weight * weight).sum() + (store.get("layer.bias") - 1.0).sum()
    loss.backward()
    optimizer.step(store, store.grads())


def test_same_seed_same_initialization():
    """Test initialization depends on the seed only, not creation order."""
    a = ParamStore(5)
    a.create("x", (4, 4))
    a.create("y", (2,))
    b = ParamStore(5)
    b.create("y", (2,))
    b.create("x", (4, 4))
    assert np.array_equal(a.get("x").data, b.get("x").data)
    assert not np.array_equal(ParamStore(6).create("x", (4, 4)).data, a.get("x").data)


def test_create_returns_existing_parameter_and_checks_shape():
    """Test creating a name twice shares the tensor, and a new shape is an error."""
    store = _store()
    assert store.create("layer.weight", (3, 2)) is store.get("layer.weight")
    with pytest.raises(ShapeMismatchError):
        store.create("layer.weight", (2, 3))


def test_identity_init_stacks():
    """Test identity init fills every stacked square matrix."""
    smooth = _store().get("smooth").data
    assert np.array_equal(smooth, np.stack([np.eye(3), np.eye(3)]))


def test_zero_gradients_leave_parameters_unchanged():
    """Test a zero gradient moves nothing but still counts a step."""
    store = _store()
    before = store.state_dict()
    optimizer = Adam()
    optimizer.step(store, {name: np.zeros_like(p.data) for name, p in store})
    assert optimizer.step_count == 1
    for name, values in store.state_dict().items():
        assert np.array_equal(values, before[name])


def test_first_step_moves_by_learning_rate():
    """Test one bias-corrected step with gradient 1 moves a scalar by -lr."""
    store = ParamStore(0)
    store.create("theta", (1,), "zeros")
    Adam(lr=1e-3).step(store, {"theta": np.ones(1)})
    assert store.get("theta").data[0] == pytest.approx(-1e-3, abs=1e-10)


def test_step_rejects_mismatched_gradient():
    """Test gradients must have the parameter's shape."""
    store = _store()
    with pytest.raises(ShapeMismatchError) as info:
        Adam().step(store, {"layer.weight": np.ones((2, 3))})
    assert info.value.primitive == "optimizer_step"


def test_update_never_changes_shapes():
    """Test shapes survive several updates."""
    store = _store()
    shapes = {name: p.shape for name, p in store}
    optimizer = Adam(lr=0.1)
    for _ in range(3):
        _quadratic_step(store, optimizer)
    assert {name: p.shape for name, p in store} == shapes


def test_ten_steps_are_deterministic():
    """Test the same seed and data give identical parameters after 10 steps."""
    results = []
    for _ in range(2):
        store = _store(seed=9)
        optimizer = Adam(lr=0.05)
        for _ in range(10):
            _quadratic_step(store, optimizer)
        results.append(store.state_dict())
    for name in results[0]:
        assert np.array_equal(results[0][name], results[1][name])


def test_grad_clip_scales_global_norm():
    """Test gradients above the clip norm are rescaled to unit norm before the moments."""
    store = ParamStore(0)
    store.create("a", (2,), "zeros")
    optimizer = Adam(lr=1.0, grad_clip=1.0)
    optimizer.step(store, {"a": np.array([30.0, 40.0])})
    np.testing.assert_allclose(optimizer._m["a"], 0.1 * np.array([0.6, 0.8]), atol=1e-15)
    np.testing.assert_allclose(store.get("a").data, [-1.0, -1.0], atol=1e-6)


def test_checkpoint_round_trip(tmp_path):
    """Test save then load reproduces names, shapes, values, seed and metadata."""
    store = _store(seed=42)
    path = save_checkpoint(store, tmp_path / "model.json", {"variant": "full"})
    loaded, metadata = load_checkpoint(path)
    assert loaded.rng_seed == 42
    assert metadata == {"variant": "full"}
    assert loaded.names() == store.names()
    for name, values in store.state_dict().items():
        assert np.array_equal(loaded.get(name).data, values)


def test_checkpoint_version_mismatch(tmp_path):
    """Test a checkpoint from another format version is refused."""
    path = save_checkpoint(_store(), tmp_path / "model.json")
    document = json.loads(path.read_text())
    document["format_version"] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_checkpoint_garbage(tmp_path):
    """Test a non-JSON file is a checkpoint error."""
    path = tmp_path / "model.json"
    path.write_text("not json at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
