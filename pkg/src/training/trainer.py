# -*- coding: utf-8 -*-
"""
训练循环
路径: src/training/trainer.py
功能:
    1. 每个 epoch 打乱训练集、按 batch_size 切批、单样本重参数化、Adam 更新
    2. KL 权重在 kl_warmup_epochs 内线性升到 1
    3. 每个 epoch 结束后以后验均值 (ε = 0) 评估训练/验证损失
    4. 验证损失连续 patience 个 epoch 未改进则停止，返回验证损失最低的参数
给定 seed 完全确定。
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from src.nn.autodiff import Tape
from src.nn.params import ModelParams
from src.processors.batching import build_batch
from src.records import SurvivalDataset, SurvivalRecord
from src.training.config import TrainConfig
from src.training.losses import outcome_arrays, total_loss
from src.training.optimizer import Adam
from src.utils.errors import ContractError, DimensionError, NumericalError
from src.utils.logger import get_logger

logger = get_logger(__name__, "training.log")

HISTORY_COLUMNS = ["epoch", "train_loss", "valid_loss", "kl", "recon", "surv_nll"]


@dataclass
class TrainResult:
    params: ModelParams
    history: pd.DataFrame
    best_epoch: int
    warnings: List[str] = field(default_factory=list)


def _batches(records: Sequence[SurvivalRecord], batch_size: int, order: Optional[np.ndarray] = None):
    order = np.arange(len(records)) if order is None else order
    for start in range(0, len(order), batch_size):
        yield [records[i] for i in order[start:start + batch_size]]


def evaluate_loss(dataset: SurvivalDataset, params: ModelParams, config: TrainConfig) -> dict:
    """
    ε = 0、KL 权重 1 下的评估损失
    total 为各批 total_loss 按批大小加权的平均；kl / recon 为每个受试者的平均，surv_nll 为受试者平均
    """
    weights = params.constants()
    n = len(dataset)
    loss = recon = kl = surv = 0.0
    for chunk in _batches(dataset.records, config.batch_size):
        terms = total_loss(build_batch(chunk), chunk, weights, config)
        b_total, _, b_recon, b_kl, b_surv = terms.scalars()
        loss += b_total * len(chunk)
        recon += b_recon
        kl += b_kl
        surv += b_surv * len(chunk)
    return {"loss": loss / n, "recon": recon / n, "kl": kl / n, "surv_nll": surv / n}


def _check_compatible(train_set: SurvivalDataset, valid_set: SurvivalDataset):
    if len(train_set) == 0 or len(valid_set) == 0:
        raise ContractError("training and validation sets must be nonempty")
    if train_set.n_features != valid_set.n_features or train_set.n_events != valid_set.n_events:
        raise DimensionError("training and validation sets disagree on M or b")


def train(train_set: SurvivalDataset, valid_set: SurvivalDataset, config: TrainConfig,
          progress: bool = True) -> TrainResult:
    _check_compatible(train_set, valid_set)
    arch = config.architecture(train_set.n_features, train_set.n_events)
    params = ModelParams.initialize(arch, config.seed)
    optimizer = Adam(config.learning_rate)
    # 初始化用 seed，打乱与噪声用独立的子流
    rng = np.random.default_rng([config.seed, 1])

    warnings = []
    for name, ds in (("train", train_set), ("valid", valid_set)):
        n_trunc = outcome_arrays(ds.records, config.t_m).n_truncated
        if n_trunc:
            warnings.append(f"{name}: {n_trunc} record(s) truncated to censored at t_m={config.t_m}")

    logger.info(f"🚀 Training {params.n_parameters} parameters on {len(train_set)} subjects "
                f"(valid {len(valid_set)}, max_epochs={config.max_epochs}, seed={config.seed})")

    rows = []
    train_eval = evaluate_loss(train_set, params, config)
    valid_eval = evaluate_loss(valid_set, params, config)
    rows.append([0, train_eval["loss"], valid_eval["loss"], train_eval["kl"], train_eval["recon"],
                 train_eval["surv_nll"]])
    best_loss, best_params, best_epoch, wait = valid_eval["loss"], params, 0, 0

    records = train_set.records
    epochs = tqdm(range(1, config.max_epochs + 1), desc="Training", unit="epoch", disable=not progress)
    for epoch in epochs:
        kl_weight = config.kl_weight(epoch)
        order = rng.permutation(len(records))
        for j, chunk in enumerate(_batches(records, config.batch_size, order)):
            noise = rng.standard_normal((len(chunk), arch.latent_dim))
            tape = Tape()
            weights = params.bind(tape)
            terms = total_loss(build_batch(chunk), chunk, weights, config, noise, kl_weight)
            if not np.isfinite(terms.total.value):
                raise NumericalError("non-finite training loss", where=f"epoch={epoch}, batch={j}")
            grads = tape.backward(terms.total)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError("non-finite gradient", where=f"epoch={epoch}, batch={j}")
            params = optimizer.step(params, grads)

        train_eval = evaluate_loss(train_set, params, config)
        valid_eval = evaluate_loss(valid_set, params, config)
        if not np.isfinite(valid_eval["loss"]):
            raise NumericalError("non-finite validation loss", where=f"epoch={epoch}")
        rows.append([epoch, train_eval["loss"], valid_eval["loss"], train_eval["kl"],
                     train_eval["recon"], train_eval["surv_nll"]])
        epochs.set_postfix(train=f"{train_eval['loss']:.4f}", valid=f"{valid_eval['loss']:.4f}")

        if valid_eval["loss"] < best_loss:
            best_loss, best_params, best_epoch, wait = valid_eval["loss"], params, epoch, 0
        else:
            wait += 1
        if wait >= config.patience:
            logger.info(f"⏹️ Early stop at epoch {epoch} (best epoch {best_epoch})")
            break

    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    logger.info(f"✅ Training done: best valid loss {best_loss:.6f} at epoch {best_epoch}")
    return TrainResult(best_params, history, best_epoch, warnings)
