"""
Adaptive-moment (Adam) optimizer over a ParamStore.
"""
from typing import Dict, Optional

import numpy as np

from app.core.errors import ShapeMismatchError
from app.numkit.params import ParamStore


class Adam:
    """Bias-corrected Adam with optional global gradient-norm clipping."""

    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        grad_clip: Optional[float] = None,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, store: ParamStore, grads: Dict[str, np.ndarray]) -> ParamStore:
        """Apply one update in place and return the store."""
        for name, grad in grads.items():
            param = store.get(name)
            if np.shape(grad) != param.shape:
                raise ShapeMismatchError("optimizer_step", param.shape, np.shape(grad), name)

        scale = 1.0
        if self.grad_clip is not None:
            total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
            if total > self.grad_clip:
                scale = self.grad_clip / total

        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for name in sorted(grads):
            grad = np.asarray(grads[name], dtype=np.float64) * scale
            param = store.get(name)
            m = self._m.get(name, np.zeros_like(param.data))
            v = self._v.get(name, np.zeros_like(param.data))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._m[name], self._v[name] = m, v
            param.data = param.data - self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        return store
