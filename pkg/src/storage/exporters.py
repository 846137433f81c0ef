# -*- coding: utf-8 -*-
"""
CSV 导出
路径: src/storage/exporters.py
功能:
    1. 统一的 CSV 写入 (固定浮点格式 %.17g，重跑逐字节一致)
    2. 数据集 -> 特征长表 / 结局表 / 真实风险表
"""

import sys
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import FLOAT_FORMAT
from src.records import SurvivalDataset
from src.utils.logger import get_logger

logger = get_logger(__name__, "storage.log")

FEATURE_COLUMNS = ["id", "time", "feature", "value"]
OUTCOME_COLUMNS = ["id", "observed_time", "event_type", "event_indicator"]


def write_csv(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"💾 Wrote {len(df)} rows -> {path}")
    return path


def dataset_frames(dataset: SurvivalDataset) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """(特征长表, 结局表)；只导出实际观测到的值"""
    feat_rows = []
    names = np.asarray(dataset.feature_names, dtype=object)
    for rec in dataset.records:
        ts, vals = rec.series.timestamps, rec.series.values
        obs_t, obs_f = np.nonzero(~np.isnan(vals))
        feat_rows.append(pd.DataFrame({
            "id": rec.id,
            "time": ts[obs_t],
            "feature": names[obs_f],
            "value": vals[obs_t, obs_f],
        }))
    features = (pd.concat(feat_rows, ignore_index=True) if feat_rows
                else pd.DataFrame(columns=FEATURE_COLUMNS))
    outcomes = pd.DataFrame({
        "id": [r.id for r in dataset.records],
        "observed_time": [r.observed_time for r in dataset.records],
        "event_type": pd.array([r.event_type for r in dataset.records], dtype="Int64"),
        "event_indicator": [int(r.event_indicator) for r in dataset.records],
    }, columns=OUTCOME_COLUMNS)
    return features[FEATURE_COLUMNS], outcomes


def oracle_frame(dataset: SurvivalDataset) -> pd.DataFrame:
    """真实风险长表 (id, regime, t, lambda_0..lambda_b)，t = 1..t_m"""
    b = dataset.n_events
    columns = ["id", "regime", "t"] + [f"lambda_{k}" for k in range(b + 1)]
    frames = []
    for rec in dataset.records:
        lam = dataset.oracle_hazards.get(rec.id)
        if lam is None:
            continue
        data = {"id": rec.id, "regime": dataset.oracle_regimes.get(rec.id, 0),
                "t": np.arange(1, lam.shape[1] + 1)}
        for k in range(b + 1):
            data[f"lambda_{k}"] = lam[k]
        frames.append(pd.DataFrame(data))
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


def read_oracle(path) -> Tuple[dict, dict]:
    """读回真实风险表: (id -> (b+1, t_m) 数组, id -> regime)"""
    df = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    lam_cols = sorted((c for c in df.columns if c.startswith("lambda_")), key=lambda c: int(c.split("_")[1]))
    hazards, regimes = {}, {}
    for sid, g in df.groupby("id", sort=False):
        g = g.sort_values("t")
        hazards[sid] = g[lam_cols].to_numpy(dtype=np.float64).T
        regimes[sid] = int(g["regime"].iloc[0])
    return hazards, regimes
