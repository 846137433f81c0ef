# -*- coding: utf-8 -*-
"""
网络层
路径: src/nn/layers.py
功能: 全连接层、GRU 单元、多层感知机、高斯 KL 与重参数化采样
所有函数同时接受 numpy 数组和 Tensor，输出 Tensor。
"""

from typing import Mapping

import numpy as np

from src.nn import autodiff as ad
from src.nn.autodiff import Tensor, softmax, value_of
from src.utils.errors import DimensionError, DomainError

__all__ = ["dense", "gru_cell", "mlp", "softmax", "gaussian_kl", "reparam_sample", "ACTIVATIONS"]

ACTIVATIONS = {
    "linear": lambda v: v,
    "tanh": ad.tanh,
    "relu": ad.relu,
}


def dense(x, W, bias, activation: str = "linear") -> Tensor:
    """y = act(W x + bias)；x 可为 (in,) 或 (B, in)"""
    if activation not in ACTIVATIONS:
        raise DomainError(f"unknown activation '{activation}'")
    xs, Ws, bs = value_of(x).shape, value_of(W).shape, value_of(bias).shape
    if len(Ws) != 2 or not xs or xs[-1] != Ws[1] or bs != (Ws[0],):
        raise DimensionError(f"dense: x {xs}, W {Ws}, bias {bs} do not conform")
    if len(xs) == 1:
        y = ad.reshape(ad.linear(ad.reshape(x, (1, xs[0])), W), (Ws[0],))
    else:
        y = ad.linear(x, W)
    return ACTIVATIONS[activation](y + bias)


def gru_cell(x_t, h, theta: Mapping, prefix: str = "gru") -> Tensor:
    """
    标准 GRU:
        r = σ(W_r [x, h] + b_r)
        u = σ(W_u [x, h] + b_u)
        n = tanh(W_n x + r ⊙ (U_n h) + b_n)
        h' = (1 - u) ⊙ n + u ⊙ h
    """
    W_r, W_u = theta[f"{prefix}.W_r"], theta[f"{prefix}.W_u"]
    W_n, U_n = theta[f"{prefix}.W_n"], theta[f"{prefix}.U_n"]
    xs, hs = value_of(x_t).shape, value_of(h).shape
    n_in, n_hidden = value_of(W_n).shape[1], value_of(U_n).shape[0]
    if xs[-1] != n_in or hs[-1] != n_hidden or xs[:-1] != hs[:-1]:
        raise DimensionError(f"gru_cell: x {xs}, h {hs}, expected (.., {n_in}) and (.., {n_hidden})")

    xh = ad.concat([x_t, h], axis=-1)
    r = ad.sigmoid(dense(xh, W_r, theta[f"{prefix}.b_r"]))
    u = ad.sigmoid(dense(xh, W_u, theta[f"{prefix}.b_u"]))
    n = ad.tanh(dense(x_t, W_n, theta[f"{prefix}.b_n"]) + r * dense(h, U_n, np.zeros(n_hidden)))
    return (1.0 - u) * n + u * h


def mlp(x, weights: Mapping, prefix: str, hidden: str = "relu", output: str = "linear") -> Tensor:
    """按 prefix.W0, prefix.W1 ... 顺序堆叠的多层感知机，最后一层用 output 激活"""
    n_layers = 0
    while f"{prefix}.W{n_layers}" in weights:
        n_layers += 1
    if n_layers == 0:
        raise DimensionError(f"no layers found under '{prefix}'")
    for i in range(n_layers):
        act = output if i == n_layers - 1 else hidden
        x = dense(x, weights[f"{prefix}.W{i}"], weights[f"{prefix}.b{i}"], act)
    return x


def gaussian_kl(mu, sigma) -> Tensor:
    """KL[N(mu, sigma²) || N(0, I)]，对所有元素求和"""
    if np.any(value_of(sigma) <= 0):
        raise DomainError("gaussian_kl needs sigma > 0 elementwise")
    terms = ad.square(mu) + ad.square(sigma) - 1.0 - 2.0 * ad.log(sigma)
    return 0.5 * ad.tsum(terms)


def reparam_sample(mu, sigma, noise) -> Tensor:
    return mu + sigma * noise
