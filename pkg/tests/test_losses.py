"""
Tests for the joint objective's loss terms.
"""
import numpy as np
import pytest

from app.core.errors import ShapeMismatchError
from app.model.frm import InteractionPosterior, InteractionPrior
from app.numkit.gradcheck import grad_check
from app.numkit.tensor import Tensor, softmax, softplus
from app.training.losses import gaussian_kl, kl_loss, nll_loss, recon_loss


def _closed_form_kl(mu_q, sigma_q, mu_p, sigma_p):
    return 0.5 * np.sum(
        sigma_q ** 2 / sigma_p ** 2 + (mu_q - mu_p) ** 2 / sigma_p ** 2 - 1.0 - 2.0 * np.log(sigma_q / sigma_p),
        axis=-1,
    )


def test_nll_of_exact_prediction_is_zero():
    """Test predicting the ground truth exactly costs nothing."""
    gt = np.zeros((2, 3, 4))
    gt[:, 1, :] = 1.0
    assert nll_loss(Tensor(gt), gt).item() == pytest.approx(0.0, abs=1e-15)


def test_nll_of_uniform_prediction_is_log_m():
    """Test a uniform prediction over 8 lanes costs log 8."""
    gt = np.zeros((1, 8, 3))
    gt[0, 5, :] = 1.0
    assert nll_loss(Tensor(np.full((1, 8, 3), 1.0 / 8.0)), gt).item() == pytest.approx(np.log(8.0), abs=1e-12)


def test_nll_shape_mismatch():
    """Test prediction and ground truth must share a shape."""
    with pytest.raises(ShapeMismatchError):
        nll_loss(Tensor(np.full((1, 4, 3), 0.25)), np.zeros((1, 4, 2)))


def test_single_component_kl_is_closed_form(rng):
    """Test K = 1 reduces the mixture KL to the Gaussian closed form over 100 random instances."""
    for _ in range(100):
        n, d = int(rng.integers(2, 5)), int(rng.integers(1, 9))
        mu_q, mu_p = rng.normal(size=(n, n, d)), rng.normal(size=(n, n, 1, d))
        sigma_q, sigma_p = rng.uniform(0.2, 3.0, size=(n, n, d)), rng.uniform(0.2, 3.0, size=(n, n, 1, d))
        posterior = InteractionPosterior(mu=Tensor(mu_q), sigma=Tensor(sigma_q))
        prior = InteractionPrior(pi=Tensor(np.ones((n, n, 1))), mu=Tensor(mu_p), sigma=Tensor(sigma_p))
        per_pair = _closed_form_kl(mu_q, sigma_q, mu_p[:, :, 0], sigma_p[:, :, 0])
        expected = per_pair[~np.eye(n, dtype=bool)].mean()
        assert abs(kl_loss(posterior, prior).item() - expected) <= 1e-9 * max(1.0, abs(expected))


def test_kl_is_zero_when_posterior_is_a_unit_weight_component(rng):
    """Test a one-hot pi whose selected component equals q gives zero KL whatever the others are."""
    n, k, d = 3, 3, 4
    mu, sigma = rng.normal(size=(n, n, d)), rng.uniform(0.5, 1.5, size=(n, n, d))
    pi = np.zeros((n, n, k))
    pi[..., 1] = 1.0
    mu_p = rng.normal(loc=4.0, size=(n, n, k, d))
    sigma_p = rng.uniform(0.2, 3.0, size=(n, n, k, d))
    mu_p[:, :, 1], sigma_p[:, :, 1] = mu, sigma
    posterior = InteractionPosterior(mu=Tensor(mu), sigma=Tensor(sigma))
    prior = InteractionPrior(pi=Tensor(pi), mu=Tensor(mu_p), sigma=Tensor(sigma_p))
    assert kl_loss(posterior, prior).item() == pytest.approx(0.0, abs=1e-9)


def test_kl_is_zero_when_components_equal_posterior(rng):
    """Test the KL vanishes when every prior component equals q."""
    mu, sigma = rng.normal(size=(2, 2, 3)), rng.uniform(0.5, 1.5, size=(2, 2, 3))
    posterior = InteractionPosterior(mu=Tensor(mu), sigma=Tensor(sigma))
    prior = InteractionPrior(
        pi=Tensor(np.full((2, 2, 2), 0.5)),
        mu=Tensor(np.stack([mu, mu], axis=2)),
        sigma=Tensor(np.stack([sigma, sigma], axis=2)),
    )
    assert kl_loss(posterior, prior).item() == pytest.approx(0.0, abs=1e-12)


def test_kl_of_single_agent_is_zero():
    """Test a scene with one agent has no pairs and no KL."""
    posterior = InteractionPosterior(mu=Tensor(np.ones((1, 1, 2))), sigma=Tensor(np.ones((1, 1, 2))))
    prior = InteractionPrior(pi=Tensor(np.ones((1, 1, 1))), mu=Tensor(np.zeros((1, 1, 1, 2))),
                             sigma=Tensor(np.ones((1, 1, 1, 2))))
    assert kl_loss(posterior, prior).item() == 0.0


def test_gaussian_kl_is_non_negative(rng):
    """Test KL(q || p) is at least zero at random points."""
    for _ in range(20):
        values = gaussian_kl(
            Tensor(rng.normal(size=(5, 3))), Tensor(rng.uniform(0.1, 3.0, size=(5, 3))),
            Tensor(rng.normal(size=(5, 3))), Tensor(rng.uniform(0.1, 3.0, size=(5, 3))),
        ).data
        assert np.all(values >= -1e-12)


def test_recon_of_exact_sample_is_zero(rng):
    """Test a sample equal to the ground truth gives zero loss."""
    gt = rng.normal(size=(2, 6, 2))
    trajectories = np.stack([gt, gt + 3.0])
    assert recon_loss(Tensor(trajectories), gt).item() == pytest.approx(0.0, abs=1e-15)


def test_recon_uses_best_sample(rng):
    """Test the best of a 3 m and a 1 m offset sample costs 1 m^2."""
    gt = rng.normal(size=(2, 6, 2))
    trajectories = np.stack([gt + np.array([3.0, 0.0]), gt + np.array([1.0, 0.0])])
    assert recon_loss(Tensor(trajectories), gt).item() == pytest.approx(1.0, abs=1e-12)


def test_recon_gradient_reaches_only_best_sample(rng):
    """Test only each agent's best sample receives gradient."""
    gt = np.zeros((2, 3, 2))
    trajectories = Tensor(np.stack([np.full((2, 3, 2), 2.0), np.full((2, 3, 2), 1.0)]), requires_grad=True)
    recon_loss(trajectories, gt).backward()
    assert np.all(trajectories.grad[0] == 0.0)
    assert np.all(trajectories.grad[1] != 0.0)


def test_recon_shape_mismatch():
    """Test samples must match the ground-truth track shape."""
    with pytest.raises(ShapeMismatchError):
        recon_loss(Tensor(np.zeros((2, 2, 6, 2))), np.zeros((2, 5, 2)))


def test_nll_gradient(rng):
    """Test the occupancy loss gradient through a softmax."""
    gt = np.eye(4)[rng.integers(0, 4, size=(2, 3))].transpose(0, 2, 1)  # 2 x 4 x 3

    report = grad_check(lambda logits: nll_loss(softmax(logits, axis=1), gt), [rng.normal(size=(2, 4, 3))])
    assert report.passed, report.max_rel_error


def test_kl_gradient(rng):
    """Test the mixture KL gradient in every posterior and prior quantity."""
    n, k, d = 2, 3, 2

    def loss(mu_q, raw_q, logits, mu_p, raw_p):
        posterior = InteractionPosterior(mu=mu_q, sigma=softplus(raw_q))
        prior = InteractionPrior(pi=softmax(logits, axis=-1), mu=mu_p, sigma=softplus(raw_p))
        return kl_loss(posterior, prior)

    inputs = [
        rng.normal(size=(n, n, d)),
        rng.normal(size=(n, n, d)),
        rng.normal(size=(n, n, k)),
        rng.normal(size=(n, n, k, d)),
        rng.normal(size=(n, n, k, d)),
    ]
    report = grad_check(loss, inputs, tol=1e-5)
    assert report.passed, report.max_rel_error


def test_recon_gradient(rng):
    """Test best-of-many reconstruction away from ties."""
    gt = rng.normal(size=(2, 4, 2))
    trajectories = np.stack([gt + rng.normal(scale=0.1, size=gt.shape), gt + 2.0 + rng.normal(size=gt.shape)])
    report = grad_check(lambda x: recon_loss(x, gt), [trajectories])
    assert report.passed, report.max_rel_error
