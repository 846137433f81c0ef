# -*- coding: utf-8 -*-
"""
潜状态聚类
路径: src/analysis/clustering.py
功能:
    1. latent_summary: 事件 k 的病因模块嵌入在 bin 1..horizon 上求和 (N × L)
    2. kmeans: k-means++ 初始化 + Lloyd 迭代，空簇用最远点重新播种
    3. cluster_incidence: 每个簇内的 Aalen-Johansen 累积发生率
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from src.evaluation.metrics import aalen_johansen, as_outcomes
from src.model.decoder import cause_embeddings, latent_trajectory
from src.model.encoder import encode
from src.nn.params import ModelParams
from src.processors.batching import build_batch
from src.records import SurvivalDataset, SurvivalRecord
from src.solvers.dopri5 import SolverSettings
from src.utils.errors import ContractError, DimensionError
from src.utils.logger import get_logger

logger = get_logger(__name__, "analysis.log")


def latent_summary(params: ModelParams, dataset: SurvivalDataset, k: int, horizon: int,
                   settings: SolverSettings = SolverSettings(), batch_size: int = 256) -> np.ndarray:
    if not 1 <= k <= params.arch.n_events:
        raise ContractError(f"event {k} outside 1..{params.arch.n_events}")
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    if dataset.n_features != params.arch.n_features:
        raise DimensionError(f"dataset has {dataset.n_features} features, model expects {params.arch.n_features}")
    weights = params.constants()
    parts = []
    records = dataset.records
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        posterior = encode(build_batch(chunk), weights, settings)
        Z = latent_trajectory(posterior.mu, weights, horizon, settings)
        parts.append(cause_embeddings(Z, weights, k).value.sum(axis=0))
    if not parts:
        return np.zeros((0, params.arch.embed_dim))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_trace: List[float]
    n_iter: int

    @property
    def inertia(self) -> float:
        return self.inertia_trace[-1]


def _assign(X: np.ndarray, centroids: np.ndarray):
    d2 = cdist(X, centroids, metric="sqeuclidean")
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def kmeans(matrix: np.ndarray, k_clusters: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"kmeans expects a 2-d matrix, got shape {X.shape}")
    if k_clusters < 1 or X.shape[0] < k_clusters:
        raise ContractError(f"need 1 <= k_clusters <= rows, got k={k_clusters}, rows={X.shape[0]}")

    centroids, _ = kmeans_plusplus(X, n_clusters=k_clusters, random_state=seed)
    labels, dist = _assign(X, centroids)
    trace = [float(dist.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_centroids = np.empty_like(centroids)
        taken = set()
        for c in range(k_clusters):
            members = labels == c
            if members.any():
                new_centroids[c] = X[members].mean(axis=0)
            else:
                # 空簇: 用离自己中心最远且未被占用的点重新播种
                order = np.argsort(-dist, kind="stable")
                pick = next(i for i in order if i not in taken)
                taken.add(pick)
                new_centroids[c] = X[pick]
        new_labels, dist = _assign(X, new_centroids)
        centroids = new_centroids
        trace.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return KMeansResult(labels, centroids, trace, n_iter)


def cluster_incidence(labels: Sequence[int], records: Sequence[SurvivalRecord], n_events: int,
                      n_clusters: int = None) -> pd.DataFrame:
    """
    长表 (cluster, event, t, F)，t 取该簇 AJ 估计的断点
    空簇跳过并记录提示
    """
    labels = np.asarray(labels, dtype=int)
    out = as_outcomes(records)
    if labels.size != len(out):
        raise DimensionError(f"{labels.size} labels for {len(out)} records")
    n_clusters = int(labels.max()) + 1 if n_clusters is None else n_clusters

    frames = []
    for c in range(n_clusters):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            logger.info(f"ℹ️ Cluster {c} is empty; no incidence curve")
            continue
        aj = aalen_johansen(out.take(members), n_events)
        for k, curve in aj.cif.items():
            frames.append(pd.DataFrame({"cluster": c, "event": k, "t": curve.breakpoints, "F": curve.values}))
    if not frames:
        return pd.DataFrame(columns=["cluster", "event", "t", "F"])
    return pd.concat(frames, ignore_index=True)


def curves_at(incidence: pd.DataFrame, t: float) -> Dict[tuple, float]:
    """从 cluster_incidence 的长表中取各 (cluster, event) 在 t 处的值 (右连续)"""
    values = {}
    for (c, k), group in incidence.groupby(["cluster", "event"], sort=True):
        before = group[group["t"] <= t]
        values[(int(c), int(k))] = float(before["F"].iloc[-1]) if len(before) else 0.0
    return values
