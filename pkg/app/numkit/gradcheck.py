"""
Finite-difference gradient checking for numkit compositions.

Errors are relative: |a - n| / max(|a|, |n|). Coordinates where both
gradients sit below what central differences can resolve at ``tol`` are
counted as skipped rather than compared.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.core.errors import GradCheckError
from app.numkit.params import ParamStore
from app.numkit.tensor import Tensor, no_grad

DEFAULT_STEP = 1e-5
# rounding of one forward pass, in units of eps * max(1, |f|)
ROUNDING_FACTOR = 16.0


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    skipped: int = 0
    floor: float = 0.0
    worst_input: int = -1
    worst_index: tuple = ()
    errors: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def record(self, position: int, index: tuple, analytic: float, numeric: float) -> None:
        if max(abs(analytic), abs(numeric)) < self.floor:
            self.skipped += 1
            return
        error = relative_error(analytic, numeric)
        self.errors.append(error)
        self.checked += 1
        if error > self.max_rel_error:
            self.max_rel_error = error
            self.worst_input = position
            self.worst_index = tuple(index)


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale == 0.0:
        return 0.0
    return abs(analytic - numeric) / scale


def resolvable_floor(value: float, step: float, tol: float) -> float:
    """Smallest gradient magnitude whose central difference is accurate to ``tol``."""
    noise = ROUNDING_FACTOR * np.finfo(np.float64).eps * max(1.0, abs(value)) / step
    return noise / tol


def _scalar(output: Tensor) -> float:
    if output.data.size != 1:
        raise GradCheckError(f"grad_check needs a scalar-valued function, got shape {output.shape}")
    return float(output.data.reshape(-1)[0])


def _coordinates(shape: tuple, max_coords: Optional[int], rng: np.random.Generator) -> List[tuple]:
    indices = list(np.ndindex(*shape)) if shape else [()]
    if max_coords is not None and len(indices) > max_coords:
        picks = rng.choice(len(indices), size=max_coords, replace=False)
        indices = [indices[i] for i in sorted(picks)]
    return indices


def _central_difference(evaluate: Callable[[], float], array: np.ndarray, index: tuple, step: float) -> float:
    original = array[index]
    array[index] = original + step
    upper = array[index]
    plus = evaluate()
    array[index] = original - step
    lower = array[index]
    minus = evaluate()
    array[index] = original
    return (plus - minus) / (upper - lower)


def grad_check(
    function: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    tol: float = 1e-5,
    step: float = DEFAULT_STEP,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare reverse-mode gradients of ``function(*tensors)`` with central
    differences at the point ``inputs``.

    The report passes iff the largest relative error over the resolvable
    coordinates is at most ``tol``.
    """
    if tol <= 0:
        raise GradCheckError("tol must be positive")
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    output = function(*leaves)
    value = _scalar(output)
    output.backward()

    def evaluate() -> float:
        with no_grad():
            return _scalar(function(*[Tensor(a) for a in arrays]))

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tol=tol, checked=0, floor=resolvable_floor(value, step, tol))
    for position, (array, leaf) in enumerate(zip(arrays, leaves)):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(array)
        for index in _coordinates(array.shape, max_coords, rng):
            numeric = _central_difference(evaluate, array, index, step)
            report.record(position, index, float(analytic[index]), numeric)
    return report


def grad_check_store(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    tol: float = 1e-5,
    step: float = DEFAULT_STEP,
    max_coords: Optional[int] = None,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> GradCheckReport:
    """
    Gradient check with respect to parameters held in a ParamStore; every
    coordinate unless ``max_coords`` caps the count per parameter.
    """
    if tol <= 0:
        raise GradCheckError("tol must be positive")
    store.zero_grad()
    output = loss_fn()
    value = _scalar(output)
    output.backward()
    grads = store.grads()

    def evaluate() -> float:
        with no_grad():
            return _scalar(loss_fn())

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tol=tol, checked=0, floor=resolvable_floor(value, step, tol))
    for position, name in enumerate(names or store.names()):
        param = store.get(name)
        for index in _coordinates(param.shape, max_coords, rng):
            numeric = _central_difference(evaluate, param.data, index, step)
            report.record(position, index, float(grads[name][index]), numeric)
    store.zero_grad()
    return report
