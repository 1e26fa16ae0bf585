"""
Parameterized building blocks. Weights live in a ParamStore under
``<name>.weight`` / ``<name>.bias``; layers created with the same name share them.
"""
from typing import List, Optional, Sequence

import numpy as np

from app.numkit.params import ParamStore
from app.numkit.tensor import Tensor, as_tensor, concat, relu


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True, init: str = "glorot"):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.create(f"{name}.weight", (in_dim, out_dim), init)
        self.bias = store.create(f"{name}.bias", (out_dim,), "zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(self.out_dim) if squeeze else y


class MLP:
    """Linear layers with ReLU between them (and after the last one if asked)."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        dims: Sequence[int],
        final_activation: bool = False,
        final_init: str = "glorot",
    ):
        self.layers: List[Linear] = []
        for k in range(len(dims) - 1):
            init = final_init if k == len(dims) - 2 else "glorot"
            self.layers.append(Linear(store, f"{name}.{k}", dims[k], dims[k + 1], init=init))
        self.final_activation = final_activation

    def __call__(self, x: Tensor) -> Tensor:
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1 or self.final_activation:
                x = relu(x)
        return x


class TemporalConv:
    """1-d convolution over time with zero 'same' padding; input B x T x C_in."""

    def __init__(self, store: ParamStore, name: str, in_channels: int, out_channels: int, kernel_size: int = 3):
        if kernel_size % 2 == 0:
            raise ValueError(f"{name}: kernel_size must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.linear = Linear(store, name, kernel_size * in_channels, out_channels)

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        batch, steps, _ = x.shape
        pad = self.kernel_size // 2
        if pad:
            zeros = Tensor(np.zeros((batch, pad, self.in_channels)))
            x = concat([zeros, x, zeros], axis=1)
        windows = [x[:, k:k + steps, :] for k in range(self.kernel_size)]
        return self.linear(concat(windows, axis=2))


class SplitLinear:
    """
    Linear map over a concatenation whose parts broadcast against each other:
    sum_k parts[k] @ W_k + b. Used for agent x lane and agent x agent grids.
    """

    def __init__(self, store: ParamStore, name: str, in_dims: Sequence[int], out_dim: int,
                 shared: Optional[Sequence[Optional[str]]] = None):
        self.weights = []
        for k, in_dim in enumerate(in_dims):
            key = shared[k] if shared is not None and shared[k] is not None else f"w{k}"
            self.weights.append(store.create(f"{name}.{key}", (in_dim, out_dim)))
        self.bias = store.create(f"{name}.bias", (out_dim,), "zeros")

    def __call__(self, *parts: Tensor) -> Tensor:
        out: Optional[Tensor] = None
        for part, weight in zip(parts, self.weights):
            term = as_tensor(part) @ weight
            out = term if out is None else out + term
        return out + self.bias
