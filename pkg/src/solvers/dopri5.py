# -*- coding: utf-8 -*-
"""
Dormand-Prince (4,5) 显式 Runge-Kutta 积分器
路径: src/solvers/dopri5.py
功能:
    1. dopri5_step: 单步 7 级 (FSAL)，返回五阶解与 y5 - y4 误差估计
    2. solve: 自适应步长 + 四阶 Hermite 稠密输出，返回 eval_times 处的状态 (numpy)
    3. solve_with_grad: 同一套代码跑在 Tensor 上，结果挂在 tape 上，可反向求导
       (先离散再求导: 梯度是离散解的精确梯度)
步长控制只看数值，不参与求导。
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from config.settings import (SOLVER_ATOL, SOLVER_H_MIN, SOLVER_INIT_DIVISOR, SOLVER_MAX_STEPS,
                             SOLVER_RTOL)
from src.nn.autodiff import as_tensor, value_of
from src.utils.errors import ContractError, DivergenceError, NumericalError, ValidationError

# Butcher 表
C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
B_ERR = tuple(b5 - b4 for b5, b4 in zip(B5, B4))

# 步中点 y(t + h/2) 的系数，用于四阶稠密输出
C_MID = (
    6025192743 / 30085553152 / 2,
    0.0,
    51252292925 / 65400821598 / 2,
    -2691868925 / 45128329728 / 2,
    187940372067 / 1594534317056 / 2,
    -1776094331 / 19743644256 / 2,
    11237099 / 235043384 / 2,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class SolverSettings:
    rtol: float = SOLVER_RTOL
    atol: float = SOLVER_ATOL
    h_init: Optional[float] = None   # None -> 区间长度 / 10
    h_min: float = SOLVER_H_MIN
    h_max: float = float("inf")
    max_steps: int = SOLVER_MAX_STEPS
    adaptive: bool = True            # False: 固定步长 h_init

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValidationError("solver tolerances must be positive")
        if not 0 < self.h_min <= self.h_max:
            raise ValidationError(f"need 0 < h_min <= h_max, got {self.h_min}, {self.h_max}")
        if self.h_init is not None and self.h_init <= 0:
            raise ValidationError("h_init must be positive")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "SolverSettings":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown solver settings: {sorted(unknown)}")
        if data.get("h_max") is None:
            data.pop("h_max", None)
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "rtol": self.rtol, "atol": self.atol, "h_init": self.h_init, "h_min": self.h_min,
            "h_max": None if np.isinf(self.h_max) else self.h_max,
            "max_steps": self.max_steps, "adaptive": self.adaptive,
        }


@dataclass(frozen=True)
class OdeProblem:
    vector_field: Callable  # (t, y) -> dy/dt，形状与 y 相同
    y0: object
    eval_times: Sequence[float]
    t0: Optional[float] = None  # 积分起点，默认 eval_times[0]

    def start(self) -> float:
        return float(self.eval_times[0]) if self.t0 is None else float(self.t0)


def _check_finite(value, t: float, what: str):
    if not np.all(np.isfinite(value_of(value))):
        raise NumericalError(f"non-finite {what}", where=f"t={t:.6g}")


def _stages(field: Callable, t: float, y, h: float, k1) -> list:
    ks = [k1]
    for i in range(1, 7):
        incr = None
        for a, k in zip(A[i], ks):
            if a == 0.0:
                continue
            incr = k * a if incr is None else incr + k * a
        k = field(t + C[i] * h, y + incr * h)
        _check_finite(k, t + C[i] * h, "stage derivative")
        ks.append(k)
    return ks


def _combine(ks: list, weights: Sequence[float]):
    total = None
    for w, k in zip(weights, ks):
        if w == 0.0:
            continue
        total = k * w if total is None else total + k * w
    return total


def dopri5_step(field: Callable, t: float, y, h: float, k1=None):
    """
    单步积分
    :return: (y5, err, ks)，ks[6] 即 field(t + h, y5)，可作为下一步的 k1
    """
    if h <= 0:
        raise ContractError(f"step size must be positive, got {h}")
    if k1 is None:
        k1 = field(t, y)
        _check_finite(k1, t, "stage derivative")
    ks = _stages(field, t, y, h, k1)
    y5 = y + _combine(ks[:6], B5) * h
    err = value_of(_combine(ks, B_ERR)) * h
    return y5, err, ks


def _dense(y0, y1, ks: list, f0, f1, dt: float, x: float):
    """中点拟合的四次多项式 e + d x + c x² + b x³ + a x⁴，x ∈ (0, 1)"""
    y_mid = y0 + _combine(ks, C_MID) * dt
    a = (f1 - f0) * (2 * dt) - (y1 + y0) * 8 + y_mid * 16
    b = (f0 * 5 - f1 * 3) * dt + y0 * 18 + y1 * 14 - y_mid * 32
    c = (f1 - f0 * 4) * dt - y0 * 11 - y1 * 5 + y_mid * 16
    d = f0 * dt
    return y0 + d * x + c * (x * x) + b * (x ** 3) + a * (x ** 4)


def _integrate(field: Callable, y0, t0: float, eval_times: np.ndarray, settings: SolverSettings) -> list:
    n = eval_times.size
    out: List = [None] * n
    t_end = float(eval_times[-1])
    t, y = t0, y0
    idx = 0
    while idx < n and eval_times[idx] == t0:
        out[idx] = y
        idx += 1
    if idx == n:
        return out

    span = t_end - t0
    h = settings.h_init if settings.h_init is not None else span / SOLVER_INIT_DIVISOR
    h = min(max(h, settings.h_min), settings.h_max)
    f0 = field(t, y)
    _check_finite(f0, t, "derivative")

    n_steps = 0
    while idx < n:
        if n_steps >= settings.max_steps:
            raise DivergenceError(f"max_steps={settings.max_steps} exceeded", where=f"t={t:.6g}")
        n_steps += 1

        last = t + h >= t_end
        step = t_end - t if last else h
        y5, err, ks = dopri5_step(field, t, y, step, k1=f0)

        ratio = 0.0
        accept = True
        if settings.adaptive:
            yv, y5v = value_of(y), value_of(y5)
            scale = settings.atol + settings.rtol * np.maximum(np.abs(yv), np.abs(y5v))
            ratio = float(np.max(np.abs(err) / scale)) if err.size else 0.0
            # 已到最小步长时强制接受
            accept = ratio <= 1.0 or step <= settings.h_min

        if accept:
            _check_finite(y5, t + step, "state")
            t_new = t_end if last else t + step
            f1 = ks[6]
            while idx < n and eval_times[idx] <= t_new:
                te = float(eval_times[idx])
                if te == t_new:
                    out[idx] = y5
                else:
                    out[idx] = _dense(y, y5, ks, f0, f1, step, (te - t) / step)
                idx += 1
            t, y, f0 = t_new, y5, f1

        if settings.adaptive:
            factor = MAX_FACTOR if ratio == 0.0 else SAFETY * ratio ** -0.2
            factor = min(max(factor, MIN_FACTOR), MAX_FACTOR)
            h = min(max(step * factor, settings.h_min), settings.h_max)
    return out


def _validated_times(problem: OdeProblem) -> np.ndarray:
    times = np.asarray(problem.eval_times, dtype=np.float64).ravel()
    if times.size == 0:
        raise ContractError("eval_times must not be empty")
    if np.any(np.diff(times) < 0):
        raise ContractError("eval_times must be nondecreasing")
    if times[0] < problem.start():
        raise ContractError(f"eval_times[0]={times[0]} precedes integration start {problem.start()}")
    return times


def solve(problem: OdeProblem, settings: SolverSettings = SolverSettings()) -> np.ndarray:
    """返回形状 (len(eval_times), *y0.shape) 的数组"""
    times = _validated_times(problem)
    y0 = np.asarray(value_of(problem.y0), dtype=np.float64)

    def field(t, y):
        dy = value_of(problem.vector_field(t, y))
        if dy.shape != y.shape:
            raise ContractError(f"vector field returned shape {dy.shape} for state {y.shape}")
        return dy

    states = _integrate(field, y0, problem.start(), times, settings)
    return np.stack(states)


def solve_with_grad(problem: OdeProblem, settings: SolverSettings = SolverSettings()) -> list:
    """返回每个 eval_time 一个 Tensor；y0 与向量场参数的梯度经由 tape 回传"""
    times = _validated_times(problem)
    y0 = as_tensor(problem.y0)

    def field(t, y):
        dy = as_tensor(problem.vector_field(t, y))
        if dy.shape != y.shape:
            raise ContractError(f"vector field returned shape {dy.shape} for state {y.shape}")
        return dy

    return _integrate(field, y0, problem.start(), times, settings)
