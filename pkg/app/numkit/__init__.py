"""
numkit: float64 tensors with reverse-mode gradients, seeded sampling,
parameter storage, Adam, and a finite-difference gradient checker.
"""
from app.numkit.gradcheck import GradCheckReport, grad_check, grad_check_store
from app.numkit.optim import Adam
from app.numkit.params import ParamStore, load_checkpoint, save_checkpoint
from app.numkit.random import sample_gaussian, sample_gumbel
from app.numkit.tensor import (
    Tensor,
    as_tensor,
    concat,
    exp,
    log,
    logsumexp,
    matmul,
    no_grad,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    softmax,
    softplus,
    tensor,
    transpose,
)

__all__ = [
    "Adam",
    "GradCheckReport",
    "ParamStore",
    "Tensor",
    "as_tensor",
    "concat",
    "exp",
    "grad_check",
    "grad_check_store",
    "load_checkpoint",
    "log",
    "logsumexp",
    "matmul",
    "no_grad",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "sample_gaussian",
    "sample_gumbel",
    "save_checkpoint",
    "softmax",
    "softplus",
    "tensor",
    "transpose",
]
