"""Training hyperparameters (desk-scale defaults; production values settable)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .distill import LossWeights


@dataclass
class TrainConfig:
    lr0: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    poly_power: float = 0.9
    total_steps: int = 2000
    batch_size: int = 4
    crop: int = 64
    scale: int = 8                      # degradation downsampling factor (4 or 8)
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    bank_capacity: int = 20480
    bank_push: int = 8
    bank_sample: int = 4096

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.total_steps <= 0:
            raise ValueError("TrainConfig: total_steps must be positive")
        if self.scale not in (4, 8):
            raise ValueError(f"TrainConfig: scale must be 4 or 8, got {self.scale}")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)
