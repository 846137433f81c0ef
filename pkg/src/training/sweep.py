# -*- coding: utf-8 -*-
"""
配置网格扫描
路径: src/training/sweep.py
功能: 对若干字段的候选值取笛卡尔积，每组跑一次 train，汇总最佳验证损失
"""

import itertools
from typing import Dict, Sequence

import pandas as pd

from src.records import SurvivalDataset
from src.training.config import TrainConfig
from src.training.trainer import train
from src.utils.errors import ValidationError
from src.utils.logger import get_logger

logger = get_logger(__name__, "training.log")


def sweep(train_set: SurvivalDataset, valid_set: SurvivalDataset, base: TrainConfig,
          grid: Dict[str, Sequence], progress: bool = False) -> pd.DataFrame:
    """
    返回每组配置一行: 扫描字段 + best_valid_loss + best_epoch + n_epochs
    字段按名字排序后展开，顺序固定
    """
    if not grid:
        raise ValidationError("sweep grid is empty")
    keys = sorted(grid)
    for key in keys:
        if not list(grid[key]):
            raise ValidationError(f"sweep field '{key}' has no candidate values")

    rows = []
    combos = list(itertools.product(*(list(grid[k]) for k in keys)))
    for i, combo in enumerate(combos, start=1):
        overrides = dict(zip(keys, combo))
        config = base.with_overrides(**overrides)
        logger.info(f"🚀 Sweep run {i}/{len(combos)}: {overrides}")
        result = train(train_set, valid_set, config, progress=progress)
        best = result.history.loc[result.history["epoch"] == result.best_epoch, "valid_loss"].iloc[0]
        rows.append({**overrides, "best_valid_loss": float(best), "best_epoch": result.best_epoch,
                     "n_epochs": int(result.history["epoch"].max())})
    return pd.DataFrame(rows, columns=keys + ["best_valid_loss", "best_epoch", "n_epochs"])
