"""
Env var loading, global settings and the structured configs
(scene generation, model, ablation, training).
"""
import json
import os
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.errors import ConfigError

load_dotenv()


class Settings:
    """Process-wide settings read from the environment."""

    def __init__(self) -> None:
        self.default_seed = int(os.getenv("LANEFRM_SEED", "0"))


settings = Settings()


class SceneParams(BaseModel):
    """Bounds for synthetic scene generation (defaults: 2 s past, 6 s future at 0.5 s)."""
    model_config = ConfigDict(frozen=True)

    num_agents: int = Field(default=2, ge=2, le=8, description="Agents per scene")
    past_steps: int = Field(default=4, ge=2, le=10, description="t_p, past positions including the current one")
    future_steps: int = Field(default=12, ge=2, le=24, description="t_f, predicted positions")
    dt: float = Field(default=0.5, ge=0.1, le=0.5, description="Seconds between positions")

    @classmethod
    def argoverse_like(cls, num_agents: int = 2) -> "SceneParams":
        """Short-horizon preset: 2 s past, 3 s future."""
        return cls(num_agents=num_agents, past_steps=4, future_steps=6, dt=0.5)


class ModelConfig(BaseModel):
    """Architecture sizes; defaults are desk-scale."""
    model_config = ConfigDict(frozen=True)

    hidden: int = Field(default=64, ge=1, description="h, width of motion/lane/intention features")
    edge_dim: int = Field(default=32, ge=1, description="d, interaction edge width")
    num_modes: int = Field(default=3, ge=1, description="K, mixture components of the prior")
    num_samples: int = Field(default=6, ge=1, description="F, samples at inference")
    past_steps: int = Field(default=4, ge=2)
    future_steps: int = Field(default=12, ge=2)
    kernel_size: int = Field(default=3, ge=1, description="Temporal convolution width (odd)")
    pair_channels: int = Field(default=16, ge=1, description="Channels of the proximity convolution")
    lane_gcn_layers: int = Field(default=2, ge=0)
    position_scale: float = Field(default=20.0, gt=0.0, description="Meters per unit of network input")
    relative_coordinates: bool = Field(default=True, description="Agent-centric / scene-centric preprocessing")
    velocity_prior: bool = Field(default=True, description="Decoder predicts residuals over the current velocity")

    def matching(self, params: SceneParams) -> "ModelConfig":
        """Same sizes, horizon taken from scene parameters."""
        return self.model_copy(update={"past_steps": params.past_steps, "future_steps": params.future_steps})


class AblationFlags(BaseModel):
    """Model variants of the ablation study; all independent."""
    model_config = ConfigDict(frozen=True)

    no_fr: bool = Field(default=False, description="Proximity input replaced with zeros")
    no_gcn: bool = Field(default=False, description="Occupancy smoothing bypassed")
    symmetric: bool = Field(default=False, description="Pair (i, j) and (j, i) share parameters")
    gaussian_prior: bool = Field(default=False, description="Prior with a single component (K = 1)")
    deterministic_edges: bool = Field(default=False, description="z = mean, no noise")

    @property
    def variant_name(self) -> str:
        names = [name for name, value in (
            ("no_fr", self.no_fr),
            ("no_gcn", self.no_gcn),
            ("sym", self.symmetric),
            ("gp", self.gaussian_prior),
            ("deterministic", self.deterministic_edges),
        ) if value]
        return "+".join(names) if names else "full"

    @classmethod
    def preset(cls, name: str) -> "AblationFlags":
        presets: Dict[str, Dict[str, bool]] = {
            "full": {},
            "no_fr": {"no_fr": True},
            "no_gcn": {"no_gcn": True},
            "sym": {"symmetric": True},
            "gp": {"gaussian_prior": True},
            "deterministic": {"deterministic_edges": True},
        }
        if name not in presets:
            raise ConfigError(f"Unknown variant '{name}', expected one of {sorted(presets)}")
        return cls(**presets[name])


VARIANT_NAMES = ("full", "no_fr", "no_gcn", "sym", "gp", "deterministic")


class TrainConfig(BaseModel):
    """Everything a training run depends on."""
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=10, ge=1)
    batch_scenes: int = Field(default=8, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    train_samples: int = Field(default=6, ge=1, description="F_train, posterior samples per scene")
    seed: int = Field(default=0, ge=0)
    max_steps: Optional[int] = Field(default=None, ge=1, description="Stop after this many optimizer steps")
    nll_weight: float = Field(default=1.0, ge=0.0)
    kl_weight: float = Field(default=1.0, ge=0.0)
    recon_weight: float = Field(default=1.0, ge=0.0)
    kl_warmup_steps: int = Field(default=0, ge=0, description="Linear KL warm-up, 0 disables")
    grad_clip: Optional[float] = Field(default=None, gt=0.0, description="Global gradient-norm clip")
    ablation: AblationFlags = Field(default_factory=AblationFlags)
    model: ModelConfig = Field(default_factory=ModelConfig)

    @property
    def variant(self) -> str:
        return self.ablation.variant_name


def load_train_config(path: Union[str, Path]) -> TrainConfig:
    """Load a TrainConfig from a JSON file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return TrainConfig.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e.msg} at char {e.pos})") from e
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
