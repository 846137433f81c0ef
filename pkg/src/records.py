# -*- coding: utf-8 -*-
"""
数据模型
路径: src/records.py
功能:
    1. IrregularSeries: 单个受试者不规则采样的多变量序列 (缺失用 NaN 表示)
    2. SurvivalRecord: (t, k, δ, X) 四元组
    3. SurvivalDataset: 记录集合 + 事件数 b / 特征数 M / 分箱宽度
    4. SimConfig: 合成竞争风险数据生成器配置
所有类型构造后不可变。
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import DimensionError, ValidationError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class IrregularSeries:
    timestamps: np.ndarray  # (n_obs,) 严格递增
    values: np.ndarray      # (n_obs, M)，NaN = 未观测

    def __post_init__(self):
        ts = _frozen(np.atleast_1d(self.timestamps))
        vals = _frozen(self.values)
        if vals.ndim == 1:
            vals = _frozen(vals.reshape(-1, 1))
        if ts.ndim != 1 or vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise DimensionError(f"timestamps {ts.shape} and values {vals.shape} do not align")
        if ts.size and (not np.all(np.isfinite(ts)) or ts[0] < 0):
            raise ValidationError("timestamps must be finite and nonnegative")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValidationError("timestamps must be strictly increasing")
        if np.any(np.isinf(vals)):
            raise ValidationError("observed values must be finite")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def n_timepoints(self) -> int:
        return self.timestamps.shape[0]

    @property
    def latest_time(self) -> float:
        return float(self.timestamps[-1])

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def subset(self, keep: np.ndarray) -> "IrregularSeries":
        return IrregularSeries(self.timestamps[keep], self.values[keep])


@dataclass(frozen=True)
class SurvivalRecord:
    id: str
    observed_time: int
    event_indicator: bool
    series: IrregularSeries
    event_type: Optional[int] = None

    def __post_init__(self):
        if int(self.observed_time) != self.observed_time:
            raise ValidationError(f"{self.id}: observed_time must be an integer bin count")
        object.__setattr__(self, "observed_time", int(self.observed_time))
        object.__setattr__(self, "event_indicator", bool(self.event_indicator))
        if self.observed_time < 1:
            raise ValidationError(f"{self.id}: observed_time must be >= 1, got {self.observed_time}")
        if not self.event_indicator and self.event_type is not None:
            raise ValidationError(f"{self.id}: censored record cannot carry an event_type")
        if self.event_indicator and (self.event_type is None or int(self.event_type) < 1):
            raise ValidationError(f"{self.id}: observed event needs event_type >= 1")
        if self.event_type is not None:
            object.__setattr__(self, "event_type", int(self.event_type))
        if self.series.n_timepoints == 0:
            raise ValidationError(f"{self.id}: empty series")

    @property
    def event_code(self) -> int:
        """0 = 删失, 否则为事件类型 k"""
        return self.event_type if self.event_indicator else 0

    def with_series(self, series: IrregularSeries) -> "SurvivalRecord":
        return SurvivalRecord(self.id, self.observed_time, self.event_indicator, series, self.event_type)


@dataclass(frozen=True)
class SurvivalDataset:
    records: Tuple[SurvivalRecord, ...]
    n_events: int
    feature_names: Tuple[str, ...]
    bin_width: float = 1.0
    # 生成器的真实风险 (仅合成数据): id -> (b+1, t_m) 数组，第 0 行为 "无事件"
    oracle_hazards: Dict[str, np.ndarray] = field(default_factory=dict, compare=False)
    warnings: Tuple[str, ...] = ()
    # 生成器为每个受试者抽到的 regime 编号 (仅合成数据)
    oracle_regimes: Dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.n_events < 1:
            raise ValidationError("dataset needs at least one event type")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids in dataset")
        for rec in self.records:
            if rec.series.n_features != self.n_features:
                raise DimensionError(
                    f"{rec.id}: {rec.series.n_features} features, dataset declares {self.n_features}"
                )
            if rec.event_indicator and rec.event_type > self.n_events:
                raise ValidationError(
                    f"{rec.id}: event_type {rec.event_type} outside 1..{self.n_events}"
                )

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def ids(self) -> List[str]:
        return [r.id for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def replace_records(self, records: Sequence[SurvivalRecord]) -> "SurvivalDataset":
        keep = {r.id for r in records}
        oracle = {k: v for k, v in self.oracle_hazards.items() if k in keep}
        regimes = {k: v for k, v in self.oracle_regimes.items() if k in keep}
        return SurvivalDataset(tuple(records), self.n_events, self.feature_names,
                               self.bin_width, oracle, self.warnings, regimes)

    def select(self, ids: Sequence[str]) -> "SurvivalDataset":
        by_id = {r.id: r for r in self.records}
        return self.replace_records([by_id[i] for i in ids])


@dataclass(frozen=True)
class SimConfig:
    n_subjects: int = 500
    n_events: int = 2
    n_features: int = 3
    base_hazards: Tuple[float, ...] = (0.04, 0.03)
    covariate_effect: Tuple[float, ...] = (0.6, -0.4)
    censoring_hazard: float = 0.02
    observation_rate: float = 0.6
    t_m: int = 20
    seed: int = 0
    min_obs_length: int = 3
    max_obs_length: int = 10
    innovation_scale: float = 1.0
    noise_scale: float = 1.0
    regime_means: Tuple[float, ...] = (0.0,)
    bin_width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "base_hazards", tuple(float(h) for h in self.base_hazards))
        object.__setattr__(self, "covariate_effect", tuple(float(c) for c in self.covariate_effect))
        object.__setattr__(self, "regime_means", tuple(float(c) for c in self.regime_means))
        if self.n_subjects < 0 or self.n_events < 1 or self.n_features < 1 or self.t_m < 1:
            raise ValidationError("n_subjects, n_events, n_features and t_m must be positive")
        if len(self.base_hazards) != self.n_events or len(self.covariate_effect) != self.n_events:
            raise ValidationError("base_hazards and covariate_effect need one entry per event")
        hazards = list(self.base_hazards) + [self.censoring_hazard]
        if any(h < 0 or h >= 1 for h in hazards):
            raise ValidationError("all hazards must lie in [0, 1)")
        if sum(self.base_hazards) >= 1:
            raise ValidationError(f"sum of base hazards {sum(self.base_hazards):.4f} must be < 1")
        if not 0 < self.observation_rate <= 1:
            raise ValidationError("observation_rate must lie in (0, 1]")
        if not 1 <= self.min_obs_length <= self.max_obs_length:
            raise ValidationError("need 1 <= min_obs_length <= max_obs_length")
        if not self.regime_means:
            raise ValidationError("regime_means needs at least one regime")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read sim config {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)
