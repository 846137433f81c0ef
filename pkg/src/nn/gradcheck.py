# -*- coding: utf-8 -*-
"""
梯度校验
路径: src/nn/gradcheck.py
功能: 反向模式梯度 vs 中心差分 (ε = 1e-4, float64)，返回最大相对误差
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.nn.autodiff import Tape, Tensor
from src.nn.params import ModelParams


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: Optional[Tuple[str, tuple]]
    n_checked: int
    per_tensor: Dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_arrays(loss_fn: Callable[[Mapping[str, Tensor]], Tensor], arrays: Mapping[str, np.ndarray],
                 eps: float = 1e-4, max_per_tensor: Optional[int] = None, seed: int = 0,
                 floor: float = 1e-3) -> GradCheckReport:
    """
    通用版本: arrays 是任意命名数组，loss_fn 接收同名 Tensor 字典
    max_per_tensor 限制每个张量抽查的坐标数 (随机抽取，seed 固定)
    """
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    tape = Tape()
    watched = {k: tape.watch(v, k) for k, v in arrays.items()}
    grads = tape.backward(loss_fn(watched))

    rng = np.random.default_rng(seed)
    base = {k: Tensor(v) for k, v in arrays.items()}
    report = GradCheckReport(0.0, None, 0)
    for name, value in arrays.items():
        coords = list(np.ndindex(value.shape))
        if max_per_tensor is not None and len(coords) > max_per_tensor:
            picks = rng.choice(len(coords), size=max_per_tensor, replace=False)
            coords = [coords[i] for i in sorted(picks)]
        worst_here = 0.0
        for idx in coords:
            bumped = value.copy()
            bumped[idx] = value[idx] + eps
            plus = float(loss_fn({**base, name: Tensor(bumped)}).value)
            bumped[idx] = value[idx] - eps
            minus = float(loss_fn({**base, name: Tensor(bumped)}).value)
            numeric = (plus - minus) / (2 * eps)
            err = relative_error(float(grads[name][idx]), numeric, floor)
            worst_here = max(worst_here, err)
            if report.worst is None or err > report.max_rel_error:
                report.max_rel_error = err
                report.worst = (name, idx)
            report.n_checked += 1
        report.per_tensor[name] = worst_here
    return report


def check_params(loss_fn: Callable[[Mapping[str, Tensor]], Tensor], params: ModelParams,
                 names: Optional[Sequence[str]] = None, **kwargs) -> GradCheckReport:
    """对 ModelParams 做梯度校验；names 为空时检查全部参数"""
    selected = params.names if names is None else list(names)
    fixed = {n: Tensor(params[n]) for n in params.names if n not in selected}

    def wrapped(weights):
        return loss_fn({**fixed, **weights})

    return check_arrays(wrapped, {n: params[n] for n in selected}, **kwargs)
