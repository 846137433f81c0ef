# -*- coding: utf-8 -*-
"""
完整前向
路径: src/model/pipeline.py
功能: encode → z₀ = μ + σ ⊙ ε → latent_trajectory → hazards / reconstruct
"""

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from src.model.decoder import HazardGrid, LatentTrajectory, hazards, latent_trajectory, reconstruct
from src.model.encoder import PosteriorParams, encode
from src.nn.autodiff import Tensor
from src.nn.layers import reparam_sample
from src.processors.batching import EncodedBatch
from src.solvers.dopri5 import SolverSettings


@dataclass(frozen=True)
class ForwardPass:
    posterior: PosteriorParams
    trajectory: LatentTrajectory
    grid: HazardGrid
    reconstruction: Tensor  # (t_m + 1, B, M)


def forward(batch: EncodedBatch, weights: Mapping, t_m: int, settings: SolverSettings,
            noise: Optional[np.ndarray] = None) -> ForwardPass:
    """noise 为空时取后验均值 (ε = 0)"""
    posterior = encode(batch, weights, settings)
    if noise is None:
        z0 = posterior.mu
    else:
        z0 = reparam_sample(posterior.mu, posterior.sigma, noise)
    Z = latent_trajectory(z0, weights, t_m, settings)
    return ForwardPass(posterior, Z, hazards(Z, weights), reconstruct(Z, weights))
