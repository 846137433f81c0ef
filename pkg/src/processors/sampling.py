# -*- coding: utf-8 -*-
"""
数据划分与缺失注入
路径: src/processors/sampling.py
功能:
    1. split: 按比例 (train, valid, test) 随机划分，给定 seed 完全确定
    2. drop_measurements: 每个受试者随机删除一定比例的观测时间点 (首个时间点保留)
"""

from typing import Sequence, Tuple

import numpy as np

from config.settings import SPLIT_FRACTIONS
from src.records import SurvivalDataset
from src.utils.errors import ValidationError


def _split_sizes(n: int, fractions: Sequence[float]) -> np.ndarray:
    """最大余数法: 先向下取整，再把剩余名额分给小数部分最大的组"""
    raw = n * np.asarray(fractions, dtype=np.float64)
    # 消除 100*0.55 = 55.000000000000007 一类的浮点误差
    raw = np.round(raw, 9)
    sizes = np.floor(raw).astype(int)
    remainder = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes


def split(dataset: SurvivalDataset, fractions: Tuple[float, float, float] = SPLIT_FRACTIONS,
          seed: int = 0) -> Tuple[SurvivalDataset, SurvivalDataset, SurvivalDataset]:
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError(f"split fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must sum to 1, got {sum(fractions)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_train, n_valid, _ = _split_sizes(len(dataset), fractions)
    records = dataset.records
    parts = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
    return tuple(dataset.replace_records([records[i] for i in part]) for part in parts)


def _round_half_down(x: float) -> int:
    return int(np.ceil(x - 0.5))


def drop_measurements(dataset: SurvivalDataset, missing_rate: float, seed: int = 0) -> SurvivalDataset:
    """结局字段 (t, k, δ) 不变，只删时间点"""
    if not 0 <= missing_rate < 1:
        raise ValidationError(f"missing_rate must lie in [0, 1), got {missing_rate}")
    if missing_rate == 0:
        return dataset

    rng = np.random.default_rng(seed)
    records = []
    for rec in dataset.records:
        n = rec.series.n_timepoints
        n_drop = min(_round_half_down(missing_rate * n), n - 1)
        if n_drop <= 0:
            records.append(rec)
            continue
        dropped = rng.choice(np.arange(1, n), size=n_drop, replace=False)
        keep = np.ones(n, dtype=bool)
        keep[dropped] = False
        records.append(rec.with_series(rec.series.subset(keep)))
    return dataset.replace_records(records)
