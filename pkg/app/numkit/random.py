"""
Seeded sampling. Every draw is a pure function of (shape, seed), so two calls
with the same arguments return bit-identical tensors.
"""
from typing import Sequence, Tuple, Union

import numpy as np

from app.numkit.tensor import Tensor

Seed = Union[int, Sequence[int]]

_TINY = np.finfo(np.float64).tiny


def rng_for(seed: Seed) -> np.random.Generator:
    """A fresh generator; tuples of ints are mixed by numpy's SeedSequence."""
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng(int(seed))
    return np.random.default_rng([int(s) for s in seed])


def derive_seed(seed: Seed, stream: int) -> Tuple[int, ...]:
    """An independent seed for one named random stream under ``seed``."""
    base = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(s) for s in seed)
    return base + (int(stream),)


def gumbel_transform(u: np.ndarray) -> np.ndarray:
    """Map uniform draws in (0, 1) to standard Gumbel draws."""
    return -np.log(-np.log(u))


def _open_uniform(shape: Tuple[int, ...], seed: Seed) -> np.ndarray:
    # keep u strictly inside (0, 1)
    u = rng_for(seed).random(shape)
    return np.clip(u, _TINY, 1.0 - np.finfo(np.float64).epsneg)


def sample_gumbel(shape: Sequence[int], seed: Seed) -> Tensor:
    return Tensor(gumbel_transform(_open_uniform(tuple(shape), seed)))


def sample_gaussian(shape: Sequence[int], seed: Seed) -> Tensor:
    return Tensor(rng_for(seed).standard_normal(tuple(shape)))

