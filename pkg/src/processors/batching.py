# -*- coding: utf-8 -*-
"""
批次构造
路径: src/processors/batching.py
功能:
    把一批 SurvivalRecord 对齐到批内所有观测时间的并集网格上:
    x 缺失处补零, m 为观测指示, delta 为距该特征上次观测的时长

注意:
    delta 从网格起点开始计时。某特征在网格第一个时间点之前从未观测时，
    该点 delta = 0 而 m = 0；"delta = 0 当且仅当 m = 1" 只在起点之后成立。
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from src.records import SurvivalRecord
from src.utils.errors import ContractError, DimensionError


@dataclass(frozen=True)
class EncodedBatch:
    ids: Tuple[str, ...]
    grid: np.ndarray           # (G,)
    x: np.ndarray              # (B, G, M)
    m: np.ndarray              # (B, G, M) ∈ {0, 1}
    delta: np.ndarray          # (B, G, M)
    latest_index: np.ndarray   # (B,) 每个受试者最新观测在网格中的位置

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[2]

    def inputs_at(self, g: int) -> np.ndarray:
        """GRU 输入 [x_t, m_t, Δ_t]，形状 (B, 3M)"""
        return np.concatenate([self.x[:, g], self.m[:, g], self.delta[:, g]], axis=1)

    def observed_rows(self, g: int) -> np.ndarray:
        return self.m[:, g].any(axis=1)


def build_batch(records: Sequence[SurvivalRecord]) -> EncodedBatch:
    if len(records) == 0:
        raise ContractError("build_batch needs at least one record")
    M = records[0].series.n_features
    for rec in records:
        if rec.series.n_features != M:
            raise DimensionError(f"{rec.id}: {rec.series.n_features} features, batch has {M}")

    grid = np.unique(np.concatenate([r.series.timestamps for r in records]))
    B, G = len(records), grid.size
    x = np.zeros((B, G, M))
    m = np.zeros((B, G, M))
    delta = np.zeros((B, G, M))
    latest = np.zeros(B, dtype=int)

    for i, rec in enumerate(records):
        pos = np.searchsorted(grid, rec.series.timestamps)
        observed = rec.series.observed
        m[i, pos] = observed
        x[i, pos] = np.where(observed, rec.series.values, 0.0)
        latest[i] = pos[-1]

        # 每个特征最近一次观测时间 (前向填充)，从未观测则退化为网格起点
        last_seen = pd.DataFrame(np.where(m[i] == 1, grid[:, None], np.nan)).ffill().to_numpy()
        last_seen = np.where(np.isnan(last_seen), grid[0], last_seen)
        delta[i] = grid[:, None] - last_seen

    for arr in (x, m, delta):
        arr.setflags(write=False)
    grid.setflags(write=False)
    return EncodedBatch(tuple(r.id for r in records), grid, x, m, delta, latest)
