# -*- coding: utf-8 -*-
"""
预测
路径: src/training/predictor.py
功能:
    1. predict: encode → z₀ = μ → 潜轨迹 → 风险 → S, F_k (默认后验均值)
       n_samples > 0 时对 z₀ 做蒙特卡洛采样并平均曲线
    2. predict_reconstruction: 数据解码器在 0..t_m 上的输出 (长表)
"""

import numpy as np
import pandas as pd

from src.model.decoder import SurvivalCurves, hazards, latent_trajectory, reconstruct, survival_curves
from src.model.encoder import encode
from src.nn.layers import reparam_sample
from src.nn.params import ModelParams
from src.processors.batching import build_batch
from src.records import SurvivalDataset
from src.solvers.dopri5 import SolverSettings
from src.utils.errors import DimensionError, NumericalError
from src.utils.logger import get_logger

logger = get_logger(__name__, "predict.log")

DEFAULT_BATCH = 256


def _check_dims(params: ModelParams, dataset: SurvivalDataset):
    # 空数据集没有特征名可比 (空文件读不出特征列表)
    if len(dataset) and dataset.n_features != params.arch.n_features:
        raise DimensionError(f"dataset has {dataset.n_features} features, model expects {params.arch.n_features}")
    if dataset.n_events != params.arch.n_events:
        raise DimensionError(f"dataset declares {dataset.n_events} events, model has {params.arch.n_events}")


def predict(params: ModelParams, dataset: SurvivalDataset, t_m: int,
            settings: SolverSettings = SolverSettings(), batch_size: int = DEFAULT_BATCH,
            n_samples: int = 0, seed: int = 0) -> SurvivalCurves:
    _check_dims(params, dataset)
    b = params.arch.n_events
    if len(dataset) == 0:
        return SurvivalCurves((), np.zeros((0, t_m + 1)), np.zeros((0, b, t_m + 1)))

    weights = params.constants()
    rng = np.random.default_rng(seed)
    S_parts, F_parts = [], []
    records = dataset.records
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        posterior = encode(build_batch(chunk), weights, settings)
        if n_samples <= 0:
            draws = [posterior.mu]
        else:
            draws = [reparam_sample(posterior.mu, posterior.sigma, rng.standard_normal(posterior.mu.shape))
                     for _ in range(n_samples)]
        S_acc, F_acc = 0.0, 0.0
        for z0 in draws:
            curves = survival_curves(hazards(latent_trajectory(z0, weights, t_m, settings), weights),
                                     posterior.ids)
            S_acc = S_acc + curves.S
            F_acc = F_acc + curves.F
        S_parts.append(S_acc / len(draws))
        F_parts.append(F_acc / len(draws))

    curves = SurvivalCurves(tuple(dataset.ids), np.concatenate(S_parts), np.concatenate(F_parts))
    gap = curves.identity_gap()
    if gap > 1e-9:
        raise NumericalError(f"predicted curves violate S + sum F = 1 (gap {gap:.3g})")
    logger.info(f"✅ Predicted curves for {len(dataset)} subjects (t_m={t_m}, n_samples={n_samples})")
    return curves


def predict_reconstruction(params: ModelParams, dataset: SurvivalDataset, t_m: int,
                           settings: SolverSettings = SolverSettings(),
                           batch_size: int = DEFAULT_BATCH) -> pd.DataFrame:
    """长表 (id, t, feature, value)，t = 0..t_m"""
    _check_dims(params, dataset)
    weights = params.constants()
    frames = []
    records = dataset.records
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        posterior = encode(build_batch(chunk), weights, settings)
        rec = reconstruct(latent_trajectory(posterior.mu, weights, t_m, settings), weights).value
        T, B, M = rec.shape
        frames.append(pd.DataFrame({
            "id": np.repeat(np.asarray(posterior.ids, dtype=object), T * M),
            "t": np.tile(np.repeat(np.arange(T), M), B),
            "feature": np.tile(np.asarray(dataset.feature_names, dtype=object), B * T),
            "value": rec.transpose(1, 0, 2).reshape(-1),
        }))
    if not frames:
        return pd.DataFrame(columns=["id", "t", "feature", "value"])
    return pd.concat(frames, ignore_index=True)
