# -*- coding: utf-8 -*-
"""
竞争风险评估指标
路径: src/evaluation/metrics.py
功能:
    1. km_censoring: 删失分布的 Kaplan-Meier 估计 Ĝ (同一时刻事件先离开风险集)
    2. kaplan_meier: 全因事件的 Kaplan-Meier 估计
    3. td_auc / td_brier: 时间依赖 AUC 与 Brier (IPCW 加权)
    4. aalen_johansen: 各事件累积发生率的非参数估计
    5. rmft: 受限平均失效时间 (右端点离散求和)
    6. evaluate: 按事件 × 百分位时间汇总成报告表
约定: 事件编码 0 = 删失，1..b = 事件类型；AUC 的并列按一致计 (≤)。
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import EVAL_PERCENTILES
from src.records import SurvivalRecord
from src.utils.errors import ContractError, DegenerateWeightError, DimensionError
from src.utils.logger import get_logger

logger = get_logger(__name__, "evaluation.log")

REPORT_COLUMNS = ["event", "percentile", "t", "auc", "brier", "n_pairs", "reason"]


# ===========================
# 基础类型
# ===========================
@dataclass(frozen=True)
class StepFunction:
    """右连续阶梯函数；第一个断点之前取 initial"""
    breakpoints: np.ndarray
    values: np.ndarray
    initial: float = 1.0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if bp.shape != vals.shape or bp.ndim != 1:
            raise DimensionError("breakpoints and values must be 1-d arrays of equal length")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ContractError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def _lookup(self, t, side: str):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, t, side=side) - 1
        padded = np.concatenate([[self.initial], self.values])
        return padded[idx + 1]

    def __call__(self, t):
        return self._lookup(t, "right")

    def left_limit(self, t):
        """f(t⁻)"""
        return self._lookup(t, "left")


@dataclass(frozen=True)
class Outcomes:
    ids: Tuple[str, ...]
    times: np.ndarray   # 观测时间 (bin)
    events: np.ndarray  # 0 = 删失

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        events = np.asarray(self.events, dtype=int)
        if times.shape != events.shape or times.ndim != 1 or len(self.ids) != times.size:
            raise DimensionError("ids, times and events must align")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return self.times.size

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord]) -> "Outcomes":
        return cls(tuple(r.id for r in records),
                   np.array([r.observed_time for r in records], dtype=np.float64),
                   np.array([r.event_code for r in records], dtype=int))

    @classmethod
    def from_arrays(cls, times, events, ids=None) -> "Outcomes":
        times = np.asarray(times, dtype=np.float64)
        ids = tuple(str(i) for i in range(times.size)) if ids is None else tuple(ids)
        return cls(ids, times, np.asarray(events, dtype=int))

    def take(self, index: np.ndarray) -> "Outcomes":
        return Outcomes(tuple(self.ids[i] for i in index), self.times[index], self.events[index])


OutcomeLike = Union[Outcomes, Sequence[SurvivalRecord]]


def as_outcomes(data: OutcomeLike) -> Outcomes:
    return data if isinstance(data, Outcomes) else Outcomes.from_records(list(data))


def _risk_table(out: Outcomes) -> pd.DataFrame:
    """按唯一时间汇总: n_at_risk, 各事件数, 删失数"""
    frame = pd.DataFrame({"time": out.times, "event": out.events})
    counts = pd.crosstab(frame["time"], frame["event"])
    table = pd.DataFrame(index=counts.index)
    table["total"] = counts.sum(axis=1)
    table["censored"] = counts[0] if 0 in counts.columns else 0
    for k in counts.columns:
        if k != 0:
            table[f"d{k}"] = counts[k]
    table["events"] = table["total"] - table["censored"]
    # 时刻 τ 的风险集: 观测时间 >= τ 的人数
    table["at_risk"] = table["total"][::-1].cumsum()[::-1]
    return table


# ===========================
# Kaplan-Meier
# ===========================
def km_censoring(data: OutcomeLike) -> StepFunction:
    """
    Ĝ(t) = Π_{τ≤t} (1 - c_τ / n_τ)
    同一时刻先移除事件，故 n_τ = 风险集 - 该时刻事件数
    """
    out = as_outcomes(data)
    if len(out) == 0:
        raise ContractError("km_censoring needs at least one record")
    table = _risk_table(out)
    n = (table["at_risk"] - table["events"]).to_numpy(dtype=np.float64)
    c = table["censored"].to_numpy(dtype=np.float64)
    factor = np.where(n > 0, 1.0 - np.divide(c, n, out=np.zeros_like(c), where=n > 0), 1.0)
    return StepFunction(table.index.to_numpy(dtype=np.float64), np.cumprod(factor))


def kaplan_meier(data: OutcomeLike) -> StepFunction:
    """全因事件的 KM 生存曲线"""
    out = as_outcomes(data)
    if len(out) == 0:
        raise ContractError("kaplan_meier needs at least one record")
    table = _risk_table(out)
    n = table["at_risk"].to_numpy(dtype=np.float64)
    d = table["events"].to_numpy(dtype=np.float64)
    return StepFunction(table.index.to_numpy(dtype=np.float64), np.cumprod(1.0 - d / n))


# ===========================
# 时间依赖 AUC / Brier
# ===========================
def _check_predictions(predictions, out: Outcomes) -> np.ndarray:
    preds = np.asarray(predictions, dtype=np.float64).ravel()
    if preds.size != len(out):
        raise DimensionError(f"{preds.size} predictions for {len(out)} subjects")
    return preds


def comparable_pairs(data: OutcomeLike, k: int, t: float) -> int:
    out = as_outcomes(data)
    cases = (out.times <= t) & (out.events == k)
    controls = out.times > t
    return int(cases.sum()) * int(controls.sum())


def td_auc(predictions, data: OutcomeLike, k: int, t: float, censoring: Optional[StepFunction] = None,
           ipcw: bool = True) -> float:
    """
    AUC_k(t) = Σ_{i∈case, j∈control} w_i 1(F_j ≤ F_i) / Σ w_i
    case: t_i ≤ t 且 k_i = k；control: t_j > t；w_i = 1 / Ĝ(t_i⁻)
    无可比对时返回 NaN
    """
    out = as_outcomes(data)
    preds = _check_predictions(predictions, out)
    cases = (out.times <= t) & (out.events == k)
    controls = out.times > t
    if not cases.any() or not controls.any():
        return float("nan")

    if ipcw:
        G = km_censoring(out) if censoring is None else censoring
        g = G.left_limit(out.times[cases])
        if np.any(g <= 0):
            bad = [out.ids[i] for i in np.flatnonzero(cases)[g <= 0]]
            raise DegenerateWeightError("censoring survival is zero at case times", bad)
        w = 1.0 / g
    else:
        w = np.ones(int(cases.sum()))

    ctrl = np.sort(preds[controls])
    concordant = np.searchsorted(ctrl, preds[cases], side="right")
    return float(np.sum(w * concordant) / (np.sum(w) * ctrl.size))


def td_brier(predictions, data: OutcomeLike, k: int, t: float,
             censoring: Optional[StepFunction] = None) -> float:
    """
    BS_k(t) = (1/N) Σ [1(t_i ≤ t, k_i = k)(1 - F_i)² / Ĝ(t_i⁻) + 1(t_i > t) F_i² / Ĝ(t)]
    t 之前删失或发生竞争事件的受试者贡献 0，但计入 N
    """
    out = as_outcomes(data)
    preds = _check_predictions(predictions, out)
    if len(out) == 0:
        return float("nan")
    G = km_censoring(out) if censoring is None else censoring
    cases = (out.times <= t) & (out.events == k)
    controls = out.times > t

    total = 0.0
    if cases.any():
        g = G.left_limit(out.times[cases])
        if np.any(g <= 0):
            bad = [out.ids[i] for i in np.flatnonzero(cases)[g <= 0]]
            raise DegenerateWeightError("censoring survival is zero at case times", bad)
        total += float(np.sum((1.0 - preds[cases]) ** 2 / g))
    if controls.any():
        g_t = float(G(t))
        if g_t <= 0:
            raise DegenerateWeightError(f"censoring survival is zero at t={t}",
                                        [out.ids[i] for i in np.flatnonzero(controls)])
        total += float(np.sum(preds[controls] ** 2)) / g_t
    return total / len(out)


# ===========================
# Aalen-Johansen / RMFT
# ===========================
@dataclass(frozen=True)
class AalenJohansen:
    survival: StepFunction
    cif: Dict[int, StepFunction]


def aalen_johansen(data: OutcomeLike, n_events: Optional[int] = None) -> AalenJohansen:
    """
    Ŝ(t) = Π (1 - d_τ / n_τ)
    F̂_k(t) = Σ_{τ≤t} (d_{k,τ} / n_τ) Ŝ(τ⁻)
    """
    out = as_outcomes(data)
    if len(out) == 0:
        raise ContractError("aalen_johansen needs at least one record")
    b = int(out.events.max()) if n_events is None else n_events
    table = _risk_table(out)
    times = table.index.to_numpy(dtype=np.float64)
    n = table["at_risk"].to_numpy(dtype=np.float64)
    d = table["events"].to_numpy(dtype=np.float64)
    S = np.cumprod(1.0 - d / n)
    S_prev = np.concatenate([[1.0], S[:-1]])

    cif = {}
    for k in range(1, b + 1):
        d_k = table[f"d{k}"].to_numpy(dtype=np.float64) if f"d{k}" in table else np.zeros_like(n)
        cif[k] = StepFunction(times, np.cumsum(d_k / n * S_prev), initial=0.0)
    return AalenJohansen(StepFunction(times, S), cif)


def rmft(F_k, horizon: int, bin_width: float = 1.0):
    """Σ_{t=1..horizon} F_k(t) × bin_width；F_k 最后一维为 t = 0..t_m"""
    F = np.asarray(F_k, dtype=np.float64)
    t_m = F.shape[-1] - 1
    if not 1 <= horizon <= t_m:
        raise ContractError(f"horizon {horizon} outside 1..{t_m}")
    return F[..., 1:horizon + 1].sum(axis=-1) * bin_width


# ===========================
# 汇总
# ===========================
def evaluation_times(data: OutcomeLike, k: int, percentiles: Sequence[float] = EVAL_PERCENTILES) -> np.ndarray:
    """事件 k 观测时间的百分位 (取最近的实际观测值)；无该事件时返回空数组"""
    out = as_outcomes(data)
    times = out.times[out.events == k]
    if times.size == 0:
        return np.array([])
    return np.percentile(times, list(percentiles), method="nearest")


def _cif_matrix(curves) -> np.ndarray:
    """SurvivalCurves 或 (n, b, t_m+1) 数组"""
    return np.asarray(curves.F if hasattr(curves, "F") else curves, dtype=np.float64)


def mean_td_auc(curves, data: OutcomeLike, k: int, percentiles: Sequence[float] = EVAL_PERCENTILES) -> float:
    """各百分位时间上 td_auc 的平均 (忽略未定义的点)"""
    out = as_outcomes(data)
    F = _cif_matrix(curves)
    t_m = F.shape[2] - 1
    aucs = []
    for t in evaluation_times(out, k, percentiles):
        if t > t_m:
            continue
        aucs.append(td_auc(F[:, k - 1, int(t)], out, k, t))
    aucs = [a for a in aucs if np.isfinite(a)]
    return float(np.mean(aucs)) if aucs else float("nan")


def bootstrap_ci(metric: Callable[[np.ndarray, Outcomes], float], predictions, data: OutcomeLike,
                 n_boot: int = 200, alpha: float = 0.05, seed: int = 0) -> Tuple[float, float, float]:
    """
    对受试者有放回重抽样，返回 (点估计, 下限, 上限)，百分位区间
    predictions 的第 0 维与受试者对齐
    """
    out = as_outcomes(data)
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.shape[0] != len(out):
        raise DimensionError("predictions and outcomes differ in length")
    estimate = float(metric(preds, out))
    rng = np.random.default_rng(seed)
    stats = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(out), size=len(out))
        value = metric(preds[idx], out.take(idx))
        if np.isfinite(value):
            stats.append(value)
    if not stats:
        return estimate, float("nan"), float("nan")
    lo, hi = np.percentile(stats, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return estimate, float(lo), float(hi)


def evaluate(curves, data: OutcomeLike, percentiles: Sequence[float] = EVAL_PERCENTILES) -> pd.DataFrame:
    """
    每个事件 × 百分位一行；未定义的指标留空并在 reason 列说明
    """
    out = as_outcomes(data)
    F = _cif_matrix(curves)
    if F.shape[0] != len(out):
        raise DimensionError(f"{F.shape[0]} predicted subjects for {len(out)} outcomes")
    b, t_m = F.shape[1], F.shape[2] - 1
    G = km_censoring(out) if len(out) else None

    rows = []
    for k in range(1, b + 1):
        times = evaluation_times(out, k, percentiles) if len(out) else np.array([])
        for i, q in enumerate(percentiles):
            row = {"event": k, "percentile": q, "t": np.nan, "auc": np.nan, "brier": np.nan,
                   "n_pairs": 0, "reason": ""}
            if times.size == 0:
                row["reason"] = "no comparable pairs"
                rows.append(row)
                continue
            t = float(times[i])
            row["t"] = t
            if t > t_m:
                row["reason"] = "beyond prediction horizon"
                rows.append(row)
                continue
            preds = F[:, k - 1, int(t)]
            row["n_pairs"] = comparable_pairs(out, k, t)
            reasons = []
            try:
                row["auc"] = td_auc(preds, out, k, t, G)
                if not np.isfinite(row["auc"]):
                    reasons.append("no comparable pairs")
            except DegenerateWeightError as e:
                reasons.append("degenerate censoring weights")
                logger.warning(f"⚠️ AUC undefined for event {k} at t={t}: {e}")
            try:
                row["brier"] = td_brier(preds, out, k, t, G)
            except DegenerateWeightError as e:
                reasons.append("degenerate censoring weights")
                logger.warning(f"⚠️ Brier undefined for event {k} at t={t}: {e}")
            row["reason"] = "; ".join(dict.fromkeys(reasons))
            rows.append(row)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)
