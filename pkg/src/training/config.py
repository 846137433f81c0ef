# -*- coding: utf-8 -*-
"""
训练配置
路径: src/training/config.py
功能: TrainConfig (不可变)，从 JSON 读取时必填字段缺失直接报错并点名
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from src.nn.params import Architecture
from src.solvers.dopri5 import SolverSettings
from src.utils.errors import ValidationError

REQUIRED_KEYS = (
    "latent_dim", "embed_dim", "hidden_dim",
    "survival_loss_scale", "learning_rate", "batch_size",
    "max_epochs", "patience", "t_m", "seed",
)


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int = 4
    embed_dim: int = 4
    hidden_dim: int = 8
    survival_loss_scale: float = 100.0
    learning_rate: float = 1e-2
    batch_size: int = 50
    max_epochs: int = 100
    patience: int = 10
    t_m: int = 20
    seed: int = 0
    bin_width: float = 1.0
    kl_warmup_epochs: int = 10
    ode_units: int = 16
    enc_ode_layers: int = 3
    dec_ode_layers: int = 3
    cause_units: int = 10
    cause_layers: int = 2
    head_units: int = 16
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverSettings.from_dict(self.solver))
        for name in ("latent_dim", "embed_dim", "hidden_dim", "batch_size", "max_epochs", "t_m",
                     "ode_units", "enc_ode_layers", "dec_ode_layers", "cause_units", "cause_layers",
                     "head_units"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        # 0 只作为边界情形允许: patience=0 训练一个 epoch，scale=0 退化为纯 ELBO
        if self.patience < 0 or self.kl_warmup_epochs < 0:
            raise ValidationError("patience and kl_warmup_epochs must be >= 0")
        if self.survival_loss_scale < 0:
            raise ValidationError(f"survival_loss_scale must be >= 0, got {self.survival_loss_scale}")
        if self.learning_rate <= 0 or self.bin_width <= 0:
            raise ValidationError("learning_rate and bin_width must be positive")

    @classmethod
    def from_dict(cls, data: dict, require_all: bool = True) -> "TrainConfig":
        if require_all:
            for key in REQUIRED_KEYS:
                if key not in data:
                    raise ValidationError(f"train config is missing required field '{key}'")
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read train config {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["solver"] = self.solver.to_dict()
        return data

    def with_overrides(self, **overrides) -> "TrainConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ValidationError(f"unknown train config fields: {sorted(unknown)}")
        return replace(self, **overrides)

    def architecture(self, n_features: int, n_events: int) -> Architecture:
        return Architecture(
            n_features=n_features, n_events=n_events,
            latent_dim=self.latent_dim, embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            ode_units=self.ode_units, enc_ode_layers=self.enc_ode_layers,
            dec_ode_layers=self.dec_ode_layers, cause_units=self.cause_units,
            cause_layers=self.cause_layers, head_units=self.head_units,
        )

    def kl_weight(self, epoch: int) -> float:
        if self.kl_warmup_epochs == 0:
            return 1.0
        return min(1.0, epoch / self.kl_warmup_epochs)
