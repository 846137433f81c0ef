# -*- coding: utf-8 -*-
"""
解码器与离散生存代数
路径: src/model/decoder.py
功能:
    1. latent_trajectory: z(t) = ODESolve(dec_ode, z₀, t = 0..t_m)
    2. hazards: 每个病因模块把 z(t) 映射为嵌入，拼接后经共享层得 b+1 个 logits，softmax 得 λ(t)
    3. event_free_survival / cif: S(t) = Π λ₀(τ)，F_k(t) = Σ λ_k(τ) S(τ-1)
    4. reconstruct: 数据解码器 recon(z(t))
约定: 风险网格按剩余时间索引，第 t 个 bin 使用 z(t)；λ 的第 0 列是 "无事件"。
"""

from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from src.nn import autodiff as ad
from src.nn.autodiff import Tensor, value_of
from src.nn.layers import dense, mlp
from src.solvers.dopri5 import OdeProblem, SolverSettings, solve_with_grad
from src.utils.errors import ContractError, NumericalError, ValidationError


@dataclass(frozen=True)
class LatentTrajectory:
    z: Tensor   # (t_m + 1, B, L0)，z[0] 即 z₀
    t_m: int

    @property
    def values(self) -> np.ndarray:
        return value_of(self.z)


@dataclass(frozen=True)
class HazardGrid:
    lam: Tensor  # (t_m, B, b + 1)，lam[t-1, i, k] = λ_k(t)

    @property
    def t_m(self) -> int:
        return self.lam.shape[0]

    @property
    def size(self) -> int:
        return self.lam.shape[1]

    @property
    def n_events(self) -> int:
        return self.lam.shape[2] - 1

    @property
    def values(self) -> np.ndarray:
        return value_of(self.lam)

    def subject(self, i: int) -> np.ndarray:
        """(b + 1, t_m) 矩阵，行 k 是 λ_k(1..t_m)"""
        return self.values[:, i, :].T

    @classmethod
    def from_cause_hazards(cls, cause: np.ndarray, tol: float = 1e-9) -> "HazardGrid":
        """
        由病因风险构造网格，λ₀ = 1 - Σ λ_k
        :param cause: (b, t_m) 单个受试者，或 (B, b, t_m)
        """
        cause = np.asarray(cause, dtype=np.float64)
        if cause.ndim == 2:
            cause = cause[None]
        if cause.ndim != 3:
            raise ContractError(f"cause hazards need shape (b, t_m) or (B, b, t_m), got {cause.shape}")
        lam0 = 1.0 - cause.sum(axis=1, keepdims=True)
        full = np.concatenate([lam0, cause], axis=1)  # (B, b+1, t_m)
        if np.any(full < -tol) or np.any(full > 1 + tol):
            raise ValidationError("hazards must lie in [0, 1] and sum to at most 1 per bin")
        return cls(Tensor(np.clip(full, 0.0, 1.0).transpose(2, 0, 1)))


@dataclass(frozen=True)
class SurvivalCurves:
    ids: Tuple[str, ...]
    S: np.ndarray  # (B, t_m + 1)，S[:, 0] = 1
    F: np.ndarray  # (B, b, t_m + 1)，F[:, :, 0] = 0

    @property
    def t_m(self) -> int:
        return self.S.shape[1] - 1

    @property
    def n_events(self) -> int:
        return self.F.shape[1]

    def identity_gap(self) -> float:
        """max |S + ΣF - 1|"""
        if self.S.size == 0:
            return 0.0
        return float(np.max(np.abs(self.S + self.F.sum(axis=1) - 1.0)))

    def cif(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.n_events:
            raise ContractError(f"event {k} outside 1..{self.n_events}")
        return self.F[:, k - 1, :]

    def to_frame(self) -> pd.DataFrame:
        """长表 (id, t, S, F_1..F_b)，按 id 顺序、t 升序"""
        n, T = self.S.shape[0], self.t_m + 1
        data = {
            "id": np.repeat(np.asarray(self.ids, dtype=object), T),
            "t": np.tile(np.arange(T), n),
            "S": self.S.reshape(-1),
        }
        for k in range(self.n_events):
            data[f"F_{k + 1}"] = self.F[:, k, :].reshape(-1)
        return pd.DataFrame(data, columns=["id", "t", "S"] + [f"F_{k + 1}" for k in range(self.n_events)])


# ===========================
# 潜轨迹
# ===========================
def latent_trajectory(z0, weights: Mapping, t_m: int, settings: SolverSettings = SolverSettings()) -> LatentTrajectory:
    if t_m < 1:
        raise ContractError(f"t_m must be >= 1, got {t_m}")

    def field(_, z):
        return mlp(z, weights, "dec_ode", hidden="tanh", output="linear")

    times = np.arange(t_m + 1, dtype=np.float64)
    try:
        states = solve_with_grad(OdeProblem(field, z0, times), settings)
    except NumericalError as e:
        raise e.__class__(f"latent trajectory failed: {e}") from e
    return LatentTrajectory(ad.stack(states, axis=0), t_m)


# ===========================
# 风险网格
# ===========================
def _flat_states(Z: LatentTrajectory) -> Tuple[Tensor, int, int]:
    T, B, L0 = Z.z.shape
    return ad.reshape(Z.z[1:], ((T - 1) * B, L0)), T - 1, B


def cause_embeddings(Z: LatentTrajectory, weights: Mapping, k: int) -> Tensor:
    """第 k 个病因模块在 bin 1..t_m 上的输出，形状 (t_m, B, L)"""
    if f"cause{k}.W0" not in weights:
        raise ContractError(f"no cause module for event {k}")
    flat, t_m, B = _flat_states(Z)
    emb = mlp(flat, weights, f"cause{k}", hidden="relu", output="relu")
    return ad.reshape(emb, (t_m, B, emb.shape[1]))


def hazards(Z: LatentTrajectory, weights: Mapping) -> HazardGrid:
    flat, t_m, B = _flat_states(Z)
    n_events = value_of(weights["head.W"]).shape[0] - 1
    embeddings = [mlp(flat, weights, f"cause{k}", hidden="relu", output="relu")
                  for k in range(1, n_events + 1)]
    logits = dense(ad.concat(embeddings, axis=1), weights["head.W"], weights["head.b"])
    lam = ad.softmax(logits, axis=1)
    return HazardGrid(ad.reshape(lam, (t_m, B, n_events + 1)))


# ===========================
# 生存代数 (numpy)
# ===========================
def event_free_survival(grid: HazardGrid) -> np.ndarray:
    """(B, t_m + 1)，S(0) = 1"""
    lam0 = grid.values[:, :, 0].T
    return np.concatenate([np.ones((lam0.shape[0], 1)), np.cumprod(lam0, axis=1)], axis=1)


def cif(grid: HazardGrid, k: int, S: np.ndarray = None) -> np.ndarray:
    """(B, t_m + 1)，F_k(0) = 0"""
    if not 1 <= k <= grid.n_events:
        raise ContractError(f"event {k} outside 1..{grid.n_events}")
    if S is None:
        S = event_free_survival(grid)
    lam_k = grid.values[:, :, k].T
    incr = lam_k * S[:, :-1]
    return np.concatenate([np.zeros((incr.shape[0], 1)), np.cumsum(incr, axis=1)], axis=1)


def survival_curves(grid: HazardGrid, ids: Sequence[str]) -> SurvivalCurves:
    S = event_free_survival(grid)
    F = np.stack([cif(grid, k, S) for k in range(1, grid.n_events + 1)], axis=1)
    return SurvivalCurves(tuple(ids), S, F)


# ===========================
# 数据解码器
# ===========================
def reconstruct(Z: LatentTrajectory, weights: Mapping) -> Tensor:
    """(t_m + 1, B, M) 的特征均值轨迹"""
    T, B, L0 = Z.z.shape
    flat = ad.reshape(Z.z, (T * B, L0))
    out = mlp(flat, weights, "recon", hidden="relu", output="linear")
    return ad.reshape(out, (T, B, out.shape[1]))
