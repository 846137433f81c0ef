# -*- coding: utf-8 -*-
"""
长表 CSV 数据接入
路径: src/fetchers/csv_loader.py
功能:
    1. 读取特征长表 (id, time, feature, value) 与结局表 (id, observed_time, event_type, event_indicator)
    2. 同一 (id, time, feature) 重复时保留最后一行
    3. 组装为 SurvivalDataset (每个 id 一条 SurvivalRecord，时间戳排序)
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from src.records import IrregularSeries, SurvivalDataset, SurvivalRecord
from src.utils.errors import ParseError, ValidationError
from src.utils.logger import get_logger

logger = get_logger(__name__, "ingest.log")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


@dataclass(frozen=True)
class CsvSchema:
    id: str = "id"
    time: str = "time"
    feature: str = "feature"
    value: str = "value"
    observed_time: str = "observed_time"
    event_type: str = "event_type"
    event_indicator: str = "event_indicator"


def _read_table(path: Path, columns) -> pd.DataFrame:
    """读成字符串表；空文件返回空表，列缺失或行格式错误抛 ParseError"""
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    if path.stat().st_size == 0:
        return pd.DataFrame(columns=list(columns), dtype=str)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns), dtype=str)
    except pd.errors.ParserError as e:
        raise ParseError(f"{path.name}: {e}") from e
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(f"{path.name}: missing columns {missing}", line=1)
    return df


def _numeric(df: pd.DataFrame, col: str, path: Path, allow_blank: bool = False) -> pd.Series:
    raw = df[col].str.strip()
    num = pd.to_numeric(raw, errors="coerce")
    bad = num.isna() & ~(allow_blank & (raw == ""))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: 表头占一行，行号从 1 开始
        raise ParseError(f"{path.name}: column '{col}' has non-numeric value {df[col].iloc[row]!r}",
                         line=row + 2)
    return num


def _indicator(df: pd.DataFrame, col: str, path: Path) -> np.ndarray:
    out = np.zeros(len(df), dtype=bool)
    for row, raw in enumerate(df[col].str.strip().str.lower()):
        if raw in _TRUE:
            out[row] = True
        elif raw not in _FALSE:
            raise ParseError(f"{path.name}: bad event_indicator {raw!r}", line=row + 2)
    return out


def ingest_long_csv(features_path, outcomes_path, schema: CsvSchema = CsvSchema(),
                    n_events: Optional[int] = None, bin_width: float = 1.0) -> SurvivalDataset:
    """
    读取长表并构造数据集
    :param n_events: 声明的事件数 b；None 时取结局表中出现的最大事件类型
    """
    features_path, outcomes_path = Path(features_path), Path(outcomes_path)
    feat = _read_table(features_path, [schema.id, schema.time, schema.feature, schema.value])
    outc = _read_table(outcomes_path,
                       [schema.id, schema.observed_time, schema.event_type, schema.event_indicator])

    if outc.empty and feat.empty:
        logger.info(f"⚪ Empty input: {outcomes_path.name}")
        return SurvivalDataset((), n_events or 1, (), bin_width)

    # 1. 特征长表: 解析 + 去重 (保留最后一行)
    feat = feat.assign(
        **{schema.time: _numeric(feat, schema.time, features_path),
           schema.value: _numeric(feat, schema.value, features_path)}
    )
    feat[schema.id] = feat[schema.id].str.strip()
    feat[schema.feature] = feat[schema.feature].str.strip()
    n_rows = len(feat)
    feat = feat.drop_duplicates(subset=[schema.id, schema.time, schema.feature], keep="last")
    if len(feat) < n_rows:
        logger.info(f"Dropped {n_rows - len(feat)} duplicated (id, time, feature) rows")
    feature_names = tuple(sorted(feat[schema.feature].unique()))

    # 2. 结局表
    observed_time = _numeric(outc, schema.observed_time, outcomes_path)
    event_type = _numeric(outc, schema.event_type, outcomes_path, allow_blank=True)
    indicator = _indicator(outc, schema.event_indicator, outcomes_path)
    outc_ids = outc[schema.id].str.strip().tolist()
    if len(set(outc_ids)) != len(outc_ids):
        raise ValidationError(f"{outcomes_path.name}: duplicated subject ids")

    declared = n_events
    if declared is None:
        observed_types = event_type[indicator]
        declared = int(observed_types.max()) if len(observed_types) else 1

    # 3. 宽化: 每个受试者 time x feature
    grouped = {sid: g for sid, g in feat.groupby(schema.id, sort=False)}
    unknown = sorted(set(grouped) - set(outc_ids))
    if unknown:
        raise ValidationError(f"measurements without outcome rows: {unknown[:10]}")

    records = []
    for row, sid in enumerate(outc_ids):
        line = row + 2
        if sid not in grouped:
            raise ValidationError(f"{outcomes_path.name} line {line}: subject {sid} has no measurements")
        wide = grouped[sid].pivot(index=schema.time, columns=schema.feature, values=schema.value)
        wide = wide.reindex(columns=list(feature_names)).sort_index()
        t_obs = observed_time.iloc[row]
        if t_obs != np.floor(t_obs):
            raise ValidationError(f"{outcomes_path.name} line {line}: observed_time must be an integer")
        delta = bool(indicator[row])
        k = event_type.iloc[row]
        if delta:
            if pd.isna(k) or not 1 <= k <= declared:
                raise ValidationError(
                    f"{outcomes_path.name} line {line}: event_type {k} outside 1..{declared}")
            k = int(k)
        elif not pd.isna(k):
            raise ParseError(f"{outcomes_path.name}: censored subject {sid} has event_type {k}", line=line)
        else:
            k = None
        try:
            records.append(SurvivalRecord(
                id=sid,
                observed_time=int(t_obs),
                event_indicator=delta,
                event_type=k,
                series=IrregularSeries(wide.index.to_numpy(dtype=np.float64),
                                       wide.to_numpy(dtype=np.float64)),
            ))
        except ValidationError as e:
            raise ValidationError(f"{outcomes_path.name} line {line}: {e}") from e

    logger.info(f"✅ Ingested {len(records)} subjects, {len(feature_names)} features, b={declared}")
    return SurvivalDataset(tuple(records), declared, feature_names, bin_width)
