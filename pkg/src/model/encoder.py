# -*- coding: utf-8 -*-
"""
ODE-RNN 编码器
路径: src/model/encoder.py
功能:
    沿批次网格从最晚时间往回走:
    1. 相邻网格之间用 ODE 演化隐状态 (反向时间，积分 dh/ds = -enc_ode(h))
    2. 受试者在该网格点有任一观测时，用 GRU 吸收 [x, m, Δ]
    3. 到达时间 0 后经后验头输出 μ 与 σ = softplus(raw) + 1e-6
"""

from dataclasses import dataclass
from typing import Mapping, Tuple, Union

import numpy as np

from config.settings import SIGMA_FLOOR
from src.nn import autodiff as ad
from src.nn.autodiff import Tensor, value_of
from src.nn.layers import gru_cell, mlp
from src.nn.params import ModelParams
from src.processors.batching import EncodedBatch
from src.solvers.dopri5 import OdeProblem, SolverSettings, solve_with_grad
from src.utils.errors import ContractError, NumericalError

Weights = Union[ModelParams, Mapping[str, Tensor]]


@dataclass(frozen=True)
class PosteriorParams:
    ids: Tuple[str, ...]
    mu: Tensor     # (B, L0)
    sigma: Tensor  # (B, L0)，逐元素 > 0

    def __post_init__(self):
        mu, sigma = value_of(self.mu), value_of(self.sigma)
        if mu.shape != sigma.shape:
            raise ContractError(f"mu {mu.shape} and sigma {sigma.shape} differ in shape")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise NumericalError("posterior parameters are not finite", where=list(self.ids))
        if np.any(sigma <= 0):
            raise NumericalError("posterior sigma must be positive", where=list(self.ids))

    @property
    def latent_dim(self) -> int:
        return value_of(self.mu).shape[1]


def as_weights(params: Weights) -> Mapping[str, Tensor]:
    return params.constants() if isinstance(params, ModelParams) else params


def _evolve(h, dt: float, weights: Mapping, settings: SolverSettings):
    """把 h 沿反向时间演化 dt"""

    def reverse_field(_, state):
        return -mlp(state, weights, "enc_ode", hidden="tanh", output="linear")

    states = solve_with_grad(OdeProblem(reverse_field, h, [0.0, dt]), settings)
    return states[-1]


def encode(batch: EncodedBatch, params: Weights, settings: SolverSettings = SolverSettings()) -> PosteriorParams:
    if batch.size == 0:
        raise ContractError("cannot encode an empty batch")
    weights = as_weights(params)
    n_hidden = value_of(weights["gru.U_n"]).shape[0]
    grid, latest = batch.grid, batch.latest_index
    h = np.zeros((batch.size, n_hidden))

    try:
        for g in range(grid.size - 1, -1, -1):
            if g < grid.size - 1:
                # 只有已越过自己最新观测的受试者才演化，其余保持 0
                alive = (latest > g).astype(np.float64)[:, None]
                if alive.any():
                    evolved = _evolve(h, float(grid[g + 1] - grid[g]), weights, settings)
                    h = alive * evolved + (1.0 - alive) * h
            fire = (batch.observed_rows(g) & (latest >= g)).astype(np.float64)[:, None]
            if fire.any():
                updated = gru_cell(batch.inputs_at(g), h, weights)
                h = fire * updated + (1.0 - fire) * h
        if grid[0] > 0:
            h = _evolve(h, float(grid[0]), weights, settings)
    except NumericalError as e:
        raise e.__class__(f"encoder solve failed for subjects {list(batch.ids)}: {e}") from e

    out = mlp(h, weights, "post", hidden="relu", output="linear")
    L0 = out.shape[1] // 2
    mu = out[:, :L0]
    sigma = ad.softplus(out[:, L0:]) + SIGMA_FLOOR
    return PosteriorParams(batch.ids, mu, sigma)
