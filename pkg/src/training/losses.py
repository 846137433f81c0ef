# -*- coding: utf-8 -*-
"""
损失函数
路径: src/training/losses.py
功能:
    1. survival_nll: 右删失离散生存负对数似然
       δ=1: -log λ_k(t) - log S(t-1)；δ=0: -log S(t)
    2. elbo_loss: 负 ELBO = 高斯重构负对数似然 (单位方差，仅观测项) + KL
    3. total_loss: 负 ELBO + survival_loss_scale × 批内平均生存 NLL
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import PROB_FLOOR
from src.model.decoder import HazardGrid
from src.model.encoder import PosteriorParams
from src.model.pipeline import forward
from src.nn import autodiff as ad
from src.nn.autodiff import Tensor, value_of
from src.nn.layers import gaussian_kl
from src.processors.batching import EncodedBatch
from src.records import SurvivalRecord
from src.training.config import TrainConfig
from src.utils.errors import ContractError, DimensionError
from src.utils.logger import get_logger

logger = get_logger(__name__, "training.log")

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Outcomes:
    """批内结局数组，超出 t_m 的观测已截断为 t_m 处删失"""
    times: np.ndarray     # (B,) int
    events: np.ndarray    # (B,) int，0 = 删失
    n_truncated: int


def outcome_arrays(records: Sequence[SurvivalRecord], t_m: int, warn: bool = True) -> Outcomes:
    times = np.array([r.observed_time for r in records], dtype=int)
    events = np.array([r.event_code for r in records], dtype=int)
    over = times > t_m
    n_truncated = int(over.sum())
    if n_truncated:
        if warn:
            logger.warning(f"⚠️ {n_truncated} record(s) observed beyond t_m={t_m}; truncated to censored at t_m")
        times = np.where(over, t_m, times)
        events = np.where(over, 0, events)
    return Outcomes(times, events, n_truncated)


def log_survival(grid: HazardGrid) -> Tensor:
    """(t_m + 1, B)，第 t 行为 log S(t)，log S(0) = 0"""
    log_lam0 = ad.log(ad.clamp_min(grid.lam[:, :, 0], PROB_FLOOR))
    log_S = ad.clamp_min(ad.cumsum(log_lam0, axis=0), float(np.log(PROB_FLOOR)))
    return ad.concat([np.zeros((1, grid.size)), log_S], axis=0)


def survival_nll(grid: HazardGrid, records: Union[SurvivalRecord, Sequence[SurvivalRecord]],
                 warn: bool = True) -> Tensor:
    """
    每个受试者的生存负对数似然，形状 (B,)；传入单条记录时返回标量
    """
    single = isinstance(records, SurvivalRecord)
    records = [records] if single else list(records)
    if len(records) != grid.size:
        raise DimensionError(f"{len(records)} records for a hazard grid of {grid.size} subjects")

    out = outcome_arrays(records, grid.t_m, warn)
    idx = np.arange(grid.size)
    log_S = log_survival(grid)
    event = out.events > 0

    # 删失: -log S(t)；事件: -log λ_k(t) - log S(t-1)
    s_index = np.where(event, out.times - 1, out.times)
    log_lam_k = ad.log(ad.clamp_min(grid.lam[out.times - 1, idx, out.events], PROB_FLOOR))
    nll = -(log_S[s_index, idx] + log_lam_k * event.astype(np.float64))
    return nll[0] if single else nll


@dataclass(frozen=True)
class ElboTerms:
    neg_elbo: Tensor
    recon_nll: Tensor
    kl: Tensor


def observation_bins(grid_times: np.ndarray, bin_width: float, t_m: int) -> np.ndarray:
    """观测时间 τ -> bin floor(τ / bin_width)，截到 [0, t_m]"""
    return np.clip(np.floor(np.asarray(grid_times) / bin_width).astype(int), 0, t_m)


def elbo_loss(batch: EncodedBatch, posterior: PosteriorParams, reconstruction, t_m: int,
              bin_width: float = 1.0, kl_weight: float = 1.0) -> ElboTerms:
    """
    reconstruction: (t_m + 1, B, M)，通常来自 decoder.reconstruct
    重构项只在 m = 1 处计入，各项求和 (不取平均)
    """
    shape = value_of(reconstruction).shape
    if shape != (t_m + 1, batch.size, batch.n_features):
        raise DimensionError(f"reconstruction {shape} does not match (t_m+1, B, M)")
    if value_of(posterior.mu).shape[0] != batch.size:
        raise ContractError("posterior rows do not match batch size")

    bins = observation_bins(batch.grid, bin_width, t_m)
    x = batch.x.transpose(1, 0, 2)   # (G, B, M)
    m = batch.m.transpose(1, 0, 2)
    residual = (reconstruction[bins] - x) * m
    recon_nll = 0.5 * ad.tsum(ad.square(residual)) + 0.5 * LOG_2PI * float(m.sum())
    kl = gaussian_kl(posterior.mu, posterior.sigma)
    return ElboTerms(recon_nll + kl_weight * kl, recon_nll, kl)


@dataclass(frozen=True)
class LossTerms:
    total: Tensor
    neg_elbo: Tensor
    recon_nll: Tensor
    kl: Tensor
    surv_nll: Tensor  # 批内平均

    def scalars(self) -> Tuple[float, float, float, float, float]:
        return tuple(float(value_of(t)) for t in
                     (self.total, self.neg_elbo, self.recon_nll, self.kl, self.surv_nll))


def total_loss(batch: EncodedBatch, records: Sequence[SurvivalRecord], params: Mapping,
               config: TrainConfig, noise: Optional[np.ndarray] = None, kl_weight: float = 1.0,
               t_m: Optional[int] = None) -> LossTerms:
    """noise: (B, L0) 标准正态样本；为空时用后验均值"""
    t_m = config.t_m if t_m is None else t_m
    fp = forward(batch, params, t_m, config.solver, noise)
    elbo = elbo_loss(batch, fp.posterior, fp.reconstruction, t_m, config.bin_width, kl_weight)
    surv = ad.mean(survival_nll(fp.grid, records, warn=False))
    total = elbo.neg_elbo + config.survival_loss_scale * surv
    return LossTerms(total, elbo.neg_elbo, elbo.recon_nll, elbo.kl, surv)
