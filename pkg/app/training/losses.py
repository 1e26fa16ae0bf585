"""
Loss terms of the joint objective: waypoint occupancy cross-entropy, the
mixture-prior KL approximation, and best-of-many reconstruction.
"""
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field

from app.core.errors import ShapeMismatchError
from app.model.frm import InteractionPosterior, InteractionPrior, off_diagonal_mask
from app.model.predictor import TrainingOutputs
from app.numkit.tensor import Tensor, as_tensor, log, logsumexp


class LossReport(BaseModel):
    """
    Scalar loss terms of one step. ``total`` is the objective actually
    minimized, the sum of the terms under the step's LossWeights (KL warm-up
    included); ``unweighted_total`` is the plain sum.
    """
    model_config = ConfigDict(frozen=True)

    step: int
    nll: float
    kl: float
    recon: float
    total: float

    @computed_field
    @property
    def unweighted_total(self) -> float:
        return self.nll + self.kl + self.recon


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    nll: float = 1.0
    kl: float = 1.0
    recon: float = 1.0


def nll_loss(tau_pred: Tensor, tau_gt: np.ndarray) -> Tensor:
    """Mean over agents and steps of -log tau_pred at the occupied lane."""
    tau_pred = as_tensor(tau_pred)
    tau_gt = np.asarray(tau_gt, dtype=np.float64)
    if tau_pred.shape != tau_gt.shape:
        raise ShapeMismatchError("nll_loss", tau_pred.shape, tau_gt.shape)
    return -(log(tau_pred) * tau_gt).sum(axis=1).mean()


def gaussian_kl(mu_q: Tensor, sigma_q: Tensor, mu_p: Tensor, sigma_p: Tensor) -> Tensor:
    """Closed-form KL(q || p) between diagonal Gaussians, summed over the last axis."""
    ratio = sigma_q / sigma_p
    diff = (mu_q - mu_p) / sigma_p
    return (ratio * ratio + diff * diff - 1.0 - 2.0 * log(ratio)).sum(axis=-1) * 0.5


def kl_loss(posterior: InteractionPosterior, prior: InteractionPrior) -> Tensor:
    """
    Per ordered pair -log sum_k pi_k exp(-KL(q || p_k)), averaged over the
    off-diagonal pairs. Zero when there are no pairs.
    """
    n = posterior.mu.shape[0]
    if n < 2:
        return Tensor(0.0)
    mu_q = posterior.mu.reshape(n, n, 1, -1)
    sigma_q = posterior.sigma.reshape(n, n, 1, -1)
    per_mode = gaussian_kl(mu_q, sigma_q, prior.mu, prior.sigma)  # N x N x K
    per_pair = -logsumexp(log(prior.pi) - per_mode, axis=-1)
    return (per_pair * off_diagonal_mask(n)).sum() * (1.0 / (n * (n - 1)))


def recon_loss(trajectories: Tensor, gt_future: np.ndarray) -> Tensor:
    """
    Per agent, the smallest mean squared displacement over the F samples;
    averaged over agents. Only the best sample of each agent gets gradient.
    """
    trajectories = as_tensor(trajectories)
    gt_future = np.asarray(gt_future, dtype=np.float64)
    if trajectories.shape[1:] != gt_future.shape:
        raise ShapeMismatchError("recon_loss", trajectories.shape, gt_future.shape)
    diff = trajectories - gt_future[None]
    per_sample = (diff * diff).sum(axis=3).mean(axis=2)  # F x N
    best = np.argmin(per_sample.data, axis=0)
    selector = np.zeros(per_sample.shape)
    selector[best, np.arange(per_sample.shape[1])] = 1.0
    return (per_sample * selector).sum(axis=0).mean()


def joint_loss(outputs: TrainingOutputs, weights: LossWeights) -> Tuple[Tensor, Dict[str, Tensor]]:
    terms = {
        "nll": nll_loss(outputs.tau_pred, outputs.tau_gt),
        "kl": kl_loss(outputs.posterior, outputs.prior),
        "recon": recon_loss(outputs.trajectories, outputs.gt_future),
    }
    total = terms["nll"] * weights.nll + terms["kl"] * weights.kl + terms["recon"] * weights.recon
    return total, terms
