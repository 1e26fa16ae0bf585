"""
Named parameter storage and the checkpoint file format.
"""
import json
import zlib
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from app.core.errors import CheckpointError, CheckpointVersionError, ShapeMismatchError
from app.core.logger import get_logger
from app.numkit.tensor import Tensor

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


class ParamStore:
    """
    Owns every trainable tensor of a model.

    Each parameter is initialized from its own generator seeded by
    (rng_seed, crc32(name)), so initialization does not depend on the
    order in which layers are created.
    """

    def __init__(self, seed: int = 0):
        self.rng_seed = int(seed)
        self._params: Dict[str, Tensor] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(sorted(self._params.items()))

    def names(self) -> List[str]:
        return sorted(self._params)

    def get(self, name: str) -> Tensor:
        return self._params[name]

    def create(self, name: str, shape: Sequence[int], init: str = "glorot") -> Tensor:
        """Create a parameter, or return the existing one when shapes agree."""
        shape = tuple(int(s) for s in shape)
        if name in self._params:
            existing = self._params[name]
            if existing.shape != shape:
                raise ShapeMismatchError("param_create", existing.shape, shape, name)
            return existing

        rng = np.random.default_rng([self.rng_seed, zlib.crc32(name.encode("utf-8"))])
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "identity":
            if len(shape) < 2 or shape[-1] != shape[-2]:
                raise ShapeMismatchError("param_create", shape, shape[:-1] + shape[-2:-1], "identity init needs square matrices")
            data = np.broadcast_to(np.eye(shape[-1]), shape).copy()
        elif init == "glorot":
            fan_in = shape[-2] if len(shape) >= 2 else 1
            fan_out = shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, shape)
        else:
            raise ValueError(f"Unknown init '{init}'")

        param = Tensor(data, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        """Current gradients; parameters without one get zeros."""
        return {
            name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in sorted(self._params.items())
        }

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in sorted(self._params.items())}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, values in state.items():
            values = np.asarray(values, dtype=np.float64)
            if name in self._params:
                if self._params[name].shape != values.shape:
                    raise ShapeMismatchError("load_state_dict", self._params[name].shape, values.shape, name)
                self._params[name].data = values.copy()
            else:
                self._params[name] = Tensor(values, requires_grad=True, name=name)

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())


class ParameterRecord(BaseModel):
    name: str
    shape: List[int]
    values: List[float]


class CheckpointFile(BaseModel):
    """On-disk layout of a checkpoint (JSON)."""
    format_version: int
    rng_seed: int
    parameters: List[ParameterRecord]
    metadata: Dict[str, Any] = Field(default_factory=dict)


def save_checkpoint(store: ParamStore, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = CheckpointFile(
        format_version=CHECKPOINT_FORMAT_VERSION,
        rng_seed=store.rng_seed,
        parameters=[
            ParameterRecord(name=name, shape=list(p.shape), values=p.data.reshape(-1).tolist())
            for name, p in store
        ],
        metadata=metadata or {},
    )
    path.write_text(document.model_dump_json(), encoding="utf-8")
    logger.debug(f"Saved checkpoint with {len(store)} parameters to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParamStore, Dict[str, Any]]:
    """Read a checkpoint back into a fresh ParamStore plus its metadata."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: not a checkpoint file ({e})") from e

    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version!r} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        document = CheckpointFile.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"{path}: {e}") from e

    store = ParamStore(seed=document.rng_seed)
    state = {}
    for record in document.parameters:
        values = np.asarray(record.values, dtype=np.float64)
        if values.size != int(np.prod(record.shape, dtype=np.int64)):
            raise CheckpointError(f"{path}: parameter '{record.name}' has {values.size} values for shape {record.shape}")
        state[record.name] = values.reshape(record.shape)
    store.load_state_dict(state)
    return store, document.metadata
