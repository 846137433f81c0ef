# -*- coding: utf-8 -*-
"""
Adam 优化器
路径: src/training/optimizer.py
"""

from typing import Dict, Mapping

import numpy as np

from config.settings import ADAM_BETAS, ADAM_EPS
from src.nn.params import ModelParams
from src.utils.errors import ContractError


class Adam:
    def __init__(self, learning_rate: float, betas=ADAM_BETAS, eps: float = ADAM_EPS):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: Mapping[str, np.ndarray]) -> ModelParams:
        """返回更新后的新参数对象，原对象不变"""
        missing = set(params.names) - set(grads)
        if missing:
            raise ContractError(f"no gradient for parameters {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        updated = {}
        for name in params.names:
            g = grads[name]
            m = self._m.get(name, np.zeros_like(g))
            v = self._v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name], self._v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            updated[name] = params[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return params.with_values(updated)
