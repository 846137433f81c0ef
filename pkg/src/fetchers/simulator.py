# -*- coding: utf-8 -*-
"""
合成竞争风险数据生成器
路径: src/fetchers/simulator.py
功能:
    1. 每个受试者抽一条 AR(1) 潜在协变量轨迹 (系数 0.9, 单位新息)
    2. 观测窗内的特征 = 协变量 + 独立高斯噪声，每个 (时间, 特征) 以 observation_rate 概率被记录
    3. 最新观测之后按离散风险 base_k * exp(effect_k * c(t)) 抽取事件/删失
    4. 保留真实风险，供 oracle 评估
"""

import sys
from pathlib import Path

import numpy as np

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import SIM_AR_COEF, SIM_CLAMP_WARN_FRACTION
from src.records import IrregularSeries, SimConfig, SurvivalDataset, SurvivalRecord
from src.utils.logger import get_logger

logger = get_logger(__name__, "simulator.log")

# 风险之和的上限 (保证 λ0 > 0)
_HAZARD_CAP = 0.999


def _covariate_path(rng: np.random.Generator, length: int, mean: float, scale: float) -> np.ndarray:
    """平稳 AR(1): c(s+1) = mean + 0.9 (c(s) - mean) + scale * eps"""
    stationary_sd = scale / np.sqrt(1.0 - SIM_AR_COEF ** 2)
    path = np.empty(length)
    path[0] = mean + stationary_sd * rng.standard_normal()
    for s in range(1, length):
        path[s] = mean + SIM_AR_COEF * (path[s - 1] - mean) + scale * rng.standard_normal()
    return path


def _cause_hazards(config: SimConfig, covariate: np.ndarray):
    """返回 (b, T) 风险矩阵，以及被截断的格子数"""
    base = np.asarray(config.base_hazards)[:, None]
    effect = np.asarray(config.covariate_effect)[:, None]
    lam = base * np.exp(effect * covariate[None, :])
    total = lam.sum(axis=0)
    over = total >= _HAZARD_CAP
    if over.any():
        lam[:, over] *= _HAZARD_CAP / total[over]
    return lam, int(over.sum())


def simulate(config: SimConfig) -> SurvivalDataset:
    """
    按配置生成数据集 (固定 seed 时逐位可复现)
    oracle_hazards[id] 为 (b+1, t_m) 数组，第 0 行是 λ0 = 1 - Σ λ_k
    """
    rng = np.random.default_rng(config.seed)
    b, M, t_m = config.n_events, config.n_features, config.t_m
    records, oracle, regimes = [], {}, {}
    clamped = 0

    for i in range(config.n_subjects):
        sid = f"S{i:05d}"
        regime = int(rng.integers(len(config.regime_means)))
        regimes[sid] = regime
        obs_len = int(rng.integers(config.min_obs_length, config.max_obs_length + 1))
        covariate = _covariate_path(rng, obs_len + t_m, config.regime_means[regime],
                                    config.innovation_scale)

        # 1. 观测窗: 特征 = 协变量 + 噪声，按概率记录
        noise = config.noise_scale * rng.standard_normal((obs_len, M))
        values = covariate[:obs_len, None] + noise
        recorded = rng.random((obs_len, M)) < config.observation_rate
        # 时间 0 至少记录一个特征，保证每个受试者从网格起点开始
        if not recorded[0].any():
            recorded[0, int(rng.integers(M))] = True
        values = np.where(recorded, values, np.nan)
        keep = recorded.any(axis=1)
        times = np.arange(obs_len, dtype=np.float64)[keep] * config.bin_width
        series = IrregularSeries(times, values[keep])
        latest = int(np.flatnonzero(keep)[-1])

        # 2. 最新观测之后的剩余时间 t = 1..t_m
        future = covariate[latest + 1: latest + 1 + t_m]
        lam, n_clamped = _cause_hazards(config, future)
        clamped += n_clamped
        lam0 = 1.0 - lam.sum(axis=0)
        oracle[sid] = np.vstack([lam0[None, :], lam])

        observed_time, event_type = t_m, None
        for t in range(t_m):
            u = rng.random()
            cum = np.cumsum(lam[:, t])
            if u < cum[-1]:
                event_type = int(np.searchsorted(cum, u, side="right")) + 1
                observed_time = t + 1
                break
            if rng.random() < config.censoring_hazard:
                observed_time = t + 1
                break

        records.append(SurvivalRecord(
            id=sid,
            observed_time=observed_time,
            event_indicator=event_type is not None,
            event_type=event_type,
            series=series,
        ))
        oracle[sid].setflags(write=False)

    warnings = []
    n_cells = max(config.n_subjects * t_m, 1)
    if clamped / n_cells > SIM_CLAMP_WARN_FRACTION:
        msg = f"hazard clamping needed on {clamped}/{n_cells} cells ({clamped / n_cells:.2%})"
        logger.warning(f"⚠️ {msg}")
        warnings.append(msg)

    feature_names = tuple(f"x{j}" for j in range(M))
    logger.info(f"✅ Simulated {config.n_subjects} subjects (b={b}, M={M}, t_m={t_m}, seed={config.seed})")
    return SurvivalDataset(tuple(records), b, feature_names, config.bin_width, oracle,
                           tuple(warnings), regimes)

