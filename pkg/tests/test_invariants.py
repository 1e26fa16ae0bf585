"""
Property tests: occupancy stays on the simplex through smoothing, proximity
is a symmetric similarity in [0, 1], and best-of-k metrics never grow with k.
"""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.evaluation.metrics import agent_ade, agent_fde, agent_misses
from app.model.frm import proximity, smooth_layer
from app.model.heads import gumbel_argmax
from app.numkit.tensor import Tensor, softmax

finite = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


@st.composite
def occupancy(draw):
    n = draw(st.integers(1, 5))
    m = draw(st.integers(1, 10))
    t = draw(st.integers(1, 6))
    logits = draw(arrays(np.float64, (n, m, t), elements=finite))
    return softmax(logits, axis=1).data


@st.composite
def smoothing_case(draw):
    tau = draw(occupancy())
    m, t = tau.shape[1], tau.shape[2]
    links = draw(arrays(np.bool_, (5, m, m)))
    adjacency = links.astype(np.float64)
    propagation = adjacency / np.maximum(1.0, adjacency.sum(axis=2, keepdims=True))
    weights = draw(arrays(np.float64, (5, t, t), elements=finite))
    return tau, propagation, weights


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(occupancy())
def test_softmax_occupancy_is_a_simplex(tau):
    """Test softmax over lanes yields non-negative columns summing to one."""
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(tau >= 0.0)


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(smoothing_case())
def test_smoothed_occupancy_is_a_simplex(case):
    """Test a smoothing layer keeps every (agent, step) column on the simplex."""
    tau, propagation, weights = case
    out = smooth_layer(Tensor(tau), propagation, Tensor(weights)).data
    assert out.shape == tau.shape
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(out > 0.0)


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(occupancy())
def test_proximity_is_symmetric_and_bounded(tau):
    """Test proximity of simplex occupancy is symmetric and within [0, 1]."""
    pr = proximity(Tensor(tau)).data
    assert pr.shape == (tau.shape[0], tau.shape[0], tau.shape[2])
    np.testing.assert_allclose(pr, pr.transpose(1, 0, 2), atol=1e-12)
    assert np.all(pr >= -1e-12)
    assert np.all(pr <= 1.0 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (3, 5, 4, 2), elements=finite),
    arrays(np.float64, (3, 4, 2), elements=finite),
    st.floats(min_value=0.1, max_value=5.0),
)
def test_best_of_k_is_monotone(predictions, gt, threshold):
    """Test ADE, FDE and misses never grow as k grows."""
    for metric in (agent_ade, agent_fde):
        values = [metric(predictions, gt, k) for k in range(1, 6)]
        for fewer, more in zip(values, values[1:]):
            assert np.all(more <= fewer)
    misses = [agent_misses(predictions, gt, k, threshold).astype(int) for k in range(1, 6)]
    for fewer, more in zip(misses, misses[1:]):
        assert np.all(more <= fewer)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6,), elements=st.floats(0.0, 1.0)), st.integers(0, 2**31 - 1))
def test_gumbel_draws_stay_in_support(weights, seed):
    """Test zero-probability categories are never drawn."""
    if weights.sum() == 0.0:
        weights = np.ones_like(weights)
    draws = gumbel_argmax(weights / weights.sum(), seed, 200)
    assert np.all(weights[draws] > 0.0)
