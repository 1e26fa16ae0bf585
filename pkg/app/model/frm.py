"""
Future relationship module: smooths waypoint occupancy over the lane graph,
turns it into inter-agent proximity, and infers a distribution over the
interaction edge of every ordered agent pair (i receives from j).

The prior over z_ij is a K-component Gaussian mixture computed from predicted
occupancy and past motion; the posterior is a single Gaussian computed from
ground-truth occupancy and future motion. Diagonal pairs carry no edge.
"""
from dataclasses import dataclass

import numpy as np

from app.config import AblationFlags, ModelConfig
from app.lanes.lane_graph import RELATIONS
from app.model.heads import gumbel_argmax
from app.model.layers import Linear, SplitLinear, TemporalConv
from app.numkit.params import ParamStore
from app.numkit.random import Seed, derive_seed, sample_gaussian
from app.numkit.tensor import Tensor, as_tensor, relu, softmax, softplus

NUM_RELATIONS = len(RELATIONS)


def off_diagonal_mask(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def smooth_layer(tau: Tensor, propagation: np.ndarray, weights: Tensor) -> Tensor:
    """
    One typed-edge smoothing layer on N x M x T occupancy:
    (1/5) sum_e softmax_lanes(relu(P_e tau_i W_e)).
    """
    tau = as_tensor(tau)
    spread = Tensor(propagation[:, None]) @ tau[None]  # 5 x N x M x T
    mixed = spread @ weights[:, None]  # weights: 5 x T x T
    terms = softmax(relu(mixed), axis=2)
    return terms.sum(axis=0) * (1.0 / NUM_RELATIONS)


class OccupancySmoother:
    """Two stacked smoothing layers; W_e starts at the identity."""

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "smoother", layers: int = 2):
        steps = config.future_steps - 1
        self.weights = []
        for k in range(layers):
            self.weights.append(store.create(f"{name}.layer{k}", (NUM_RELATIONS, steps, steps), "identity"))

    def __call__(self, tau: Tensor, propagation: np.ndarray) -> Tensor:
        for weights in self.weights:
            tau = smooth_layer(tau, propagation, weights)
        return tau


def proximity(smoothed: Tensor) -> Tensor:
    """PR[i, j, t] = sum_m tau[i, m, t] tau[j, m, t]; N x N x T."""
    smoothed = as_tensor(smoothed)
    by_time = smoothed.transpose(2, 0, 1)  # T x N x M
    gram = by_time @ by_time.transpose(0, 2, 1)  # T x N x N
    return gram.transpose(1, 2, 0)


@dataclass
class InteractionPrior:
    pi: Tensor  # N x N x K
    mu: Tensor  # N x N x K x d
    sigma: Tensor  # N x N x K x d

    @property
    def num_modes(self) -> int:
        return self.pi.shape[-1]


@dataclass
class InteractionPosterior:
    mu: Tensor  # N x N x d
    sigma: Tensor  # N x N x d


@dataclass
class InteractionEdgeSample:
    z: Tensor  # F x N x N x d, zero on the diagonal
    mode_ids: np.ndarray  # F x N x N


class PairEncoder:
    """
    Pair feature from [pr_ij, h_i, h_j]: pr_ij goes through a 1-d temporal
    convolution and is mean-pooled over time. With ``symmetric`` the receiver
    and sender projections share one weight, so pair (i, j) equals (j, i).
    """

    def __init__(self, store: ParamStore, config: ModelConfig, name: str, symmetric: bool = False):
        self.conv = TemporalConv(store, f"{name}.conv", 1, config.pair_channels, config.kernel_size)
        shared = (None, "agent", "agent") if symmetric else (None, "receiver", "sender")
        self.mix = SplitLinear(store, f"{name}.mix", [config.pair_channels, config.hidden, config.hidden],
                               config.hidden, shared=shared)

    def __call__(self, pr: Tensor, h_x: Tensor) -> Tensor:
        pr = as_tensor(pr)
        n, _, steps = pr.shape
        conv = relu(self.conv(pr.reshape(n * n, steps, 1)))
        pooled = conv.mean(axis=1).reshape(n, n, -1)
        return relu(self.mix(pooled, h_x.reshape(n, 1, -1), h_x.reshape(1, n, -1)))


class PriorNet:
    """F_theta: pair feature -> (pi_K, mu_K, sigma_K)."""

    def __init__(self, store: ParamStore, config: ModelConfig, ablation: AblationFlags, name: str = "prior"):
        self.num_modes = 1 if ablation.gaussian_prior else config.num_modes
        self.edge_dim = config.edge_dim
        self.pair = PairEncoder(store, config, f"{name}.pair", ablation.symmetric)
        self.mu = Linear(store, f"{name}.mu", config.hidden, self.num_modes * config.edge_dim)
        self.sigma = Linear(store, f"{name}.sigma", config.hidden, self.num_modes * config.edge_dim)
        self.pi = Linear(store, f"{name}.pi", config.hidden, self.num_modes)

    def __call__(self, pr: Tensor, h_x: Tensor) -> InteractionPrior:
        pair = self.pair(pr, h_x)
        n = pair.shape[0]
        shape = (n, n, self.num_modes, self.edge_dim)
        return InteractionPrior(
            pi=softmax(self.pi(pair), axis=-1),
            mu=self.mu(pair).reshape(shape),
            sigma=softplus(self.sigma(pair)).reshape(shape),
        )


class PosteriorNet:
    """F_phi: pair feature -> (mu, sigma) of a single Gaussian."""

    def __init__(self, store: ParamStore, config: ModelConfig, ablation: AblationFlags,
                 name: str = "posterior", sigma_init: str = "glorot"):
        self.pair = PairEncoder(store, config, f"{name}.pair", ablation.symmetric)
        self.mu = Linear(store, f"{name}.mu", config.hidden, config.edge_dim)
        self.sigma = Linear(store, f"{name}.sigma", config.hidden, config.edge_dim, init=sigma_init)

    def __call__(self, pr: Tensor, h_x: Tensor) -> InteractionPosterior:
        pair = self.pair(pr, h_x)
        return InteractionPosterior(mu=self.mu(pair), sigma=softplus(self.sigma(pair)))


def sample_prior_edges(
    prior: InteractionPrior,
    seed: Seed,
    num_samples: int = 1,
    deterministic: bool = False,
) -> InteractionEdgeSample:
    """
    Per pair: k = argmax(log pi + g), then z = mu_k + sigma_k * eps
    (z = mu_k when deterministic). Gradients reach mu_k and sigma_k of the
    selected mode only.
    """
    n, _, k, d = prior.mu.shape
    modes = gumbel_argmax(prior.pi.data, derive_seed(seed, 0), num_samples)  # F x N x N
    selector = Tensor(np.eye(k)[modes][..., None])  # F x N x N x K x 1
    mu = (selector * prior.mu[None]).sum(axis=3)
    mask = off_diagonal_mask(n)[None, :, :, None]
    if deterministic:
        return InteractionEdgeSample(z=mu * mask, mode_ids=modes)
    sigma = (selector * prior.sigma[None]).sum(axis=3)
    eps = sample_gaussian((num_samples, n, n, d), derive_seed(seed, 1))
    return InteractionEdgeSample(z=(mu + sigma * eps) * mask, mode_ids=modes)


def prior_mode_edges(prior: InteractionPrior) -> InteractionEdgeSample:
    """One sample per pair at the mean of its most probable prior component."""
    n = prior.mu.shape[0]
    modes = np.argmax(prior.pi.data, axis=-1)  # N x N
    rows, cols = np.indices((n, n))
    z = prior.mu.data[rows, cols, modes] * off_diagonal_mask(n)[:, :, None]
    return InteractionEdgeSample(z=Tensor(z[None]), mode_ids=modes[None])


def prior_log_density(prior: InteractionPrior, z: np.ndarray) -> np.ndarray:
    """F x N x N log of the mixture prior density at edges z (F x N x N x d); zero on the diagonal."""
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape[1], z.shape[-1]
    mu, sigma = prior.mu.data[None], prior.sigma.data[None]  # 1 x N x N x K x d
    scaled = (z[:, :, :, None, :] - mu) / sigma
    per_mode = -0.5 * (scaled * scaled).sum(axis=-1) - np.log(sigma).sum(axis=-1) - 0.5 * d * np.log(2.0 * np.pi)
    with np.errstate(divide="ignore"):
        log_pi = np.log(prior.pi.data)[None]
    density = np.logaddexp.reduce(log_pi + per_mode, axis=-1)
    return density * off_diagonal_mask(n)[None]


def sample_posterior_edges(
    posterior: InteractionPosterior,
    seed: Seed,
    num_samples: int = 1,
    deterministic: bool = False,
) -> InteractionEdgeSample:
    """z = mu + sigma * eps, reparameterized; diagonal zeroed."""
    n, _, d = posterior.mu.shape
    mask = off_diagonal_mask(n)[None, :, :, None]
    modes = np.zeros((num_samples, n, n), dtype=np.int64)
    mu = posterior.mu.reshape(1, n, n, d)
    if deterministic:
        return InteractionEdgeSample(z=(mu + np.zeros((num_samples, 1, 1, 1))) * mask, mode_ids=modes)
    eps = sample_gaussian((num_samples, n, n, d), derive_seed(seed, 2))
    return InteractionEdgeSample(z=(mu + posterior.sigma.reshape(1, n, n, d) * eps) * mask, mode_ids=modes)


def aggregate_messages(z: Tensor, sender_features: Tensor) -> Tensor:
    """m[f, i] = (1 / (N - 1)) sum_{j != i} z[f, i, j] * s[j]; zeros when N = 1."""
    z = as_tensor(z)
    n = z.shape[1]
    mask = off_diagonal_mask(n)[None, :, :, None]
    sender_features = as_tensor(sender_features)
    senders = sender_features.reshape(1, 1, n, -1) if sender_features.ndim == 2 else sender_features[:, None]
    return (z * mask * senders).sum(axis=2) * (1.0 / max(n - 1, 1))


class MessagePassing:
    """h_R^i = relu(affine(mean_{j != i} z_ij * F_p(h_x^j)))."""

    def __init__(self, store: ParamStore, config: ModelConfig, name: str = "messages"):
        self.sender = Linear(store, f"{name}.sender", config.hidden, config.edge_dim)
        self.affine = Linear(store, f"{name}.affine", config.edge_dim, config.edge_dim)

    def __call__(self, z: Tensor, h_x: Tensor) -> Tensor:
        return relu(self.affine(aggregate_messages(z, self.sender(h_x))))


class FutureRelationshipModule:
    """Smoothing, proximity, prior, posterior and message passing under one set of ablation flags."""

    def __init__(self, store: ParamStore, config: ModelConfig, ablation: AblationFlags):
        self.ablation = ablation
        self.smoother = OccupancySmoother(store, config)
        self.prior = PriorNet(store, config, ablation)
        self.posterior = PosteriorNet(store, config, ablation)
        self.messages = MessagePassing(store, config)

    def proximity_from(self, tau: Tensor, propagation: np.ndarray) -> Tensor:
        """Proximity over intermediate steps 1..t_f-1 of an N x M x t_f occupancy."""
        tau = as_tensor(tau)
        intermediate = tau[:, :, :-1]
        smoothed = intermediate if self.ablation.no_gcn else self.smoother(intermediate, propagation)
        pr = proximity(smoothed)
        if self.ablation.no_fr:
            return Tensor(np.zeros(pr.shape))
        return pr

    def prior_from(self, tau_pred: Tensor, h_past: Tensor, propagation: np.ndarray) -> InteractionPrior:
        return self.prior(self.proximity_from(tau_pred, propagation), h_past)

    def posterior_from(self, tau_gt: np.ndarray, h_future: Tensor, propagation: np.ndarray) -> InteractionPosterior:
        return self.posterior(self.proximity_from(tau_gt, propagation), h_future)

    def sample_prior(self, prior: InteractionPrior, seed: Seed, num_samples: int) -> InteractionEdgeSample:
        return sample_prior_edges(prior, seed, num_samples, self.ablation.deterministic_edges)

    def sample_posterior(self, posterior: InteractionPosterior, seed: Seed, num_samples: int) -> InteractionEdgeSample:
        return sample_posterior_edges(posterior, seed, num_samples, self.ablation.deterministic_edges)
