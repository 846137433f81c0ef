# -*- coding: utf-8 -*-
"""
最小反向模式自动微分
路径: src/nn/autodiff.py
功能:
    1. Tensor: 包装 float64 数组，运算时记录到所属 Tape
    2. Tape: 按创建顺序记录运算 (即拓扑序)，backward 严格逆序遍历，梯度加法累积
    3. 运算表: 每个运算给出前向值与 vjp (向量-雅可比积)
没有 tape 的 Tensor 只做前向计算，不记录任何东西 (推理路径)。
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit
from scipy.special import softmax as _softmax

from src.utils.errors import ContractError


class Tape:
    def __init__(self):
        self._nodes: List[Tuple[int, Tuple["Tensor", ...], Callable]] = []
        self._leaves: Dict[str, "Tensor"] = {}
        self._n_slots = 0

    def __len__(self) -> int:
        return len(self._nodes)

    def _slot(self) -> int:
        self._n_slots += 1
        return self._n_slots - 1

    def watch(self, value, name: str) -> "Tensor":
        """登记一个叶子 (参数)，backward 会为其返回梯度"""
        if name in self._leaves:
            raise ContractError(f"leaf '{name}' already watched")
        leaf = Tensor(value, self)
        self._leaves[name] = leaf
        return leaf

    def record(self, out: "Tensor", parents: Tuple["Tensor", ...], vjp: Callable):
        self._nodes.append((out._slot, parents, vjp))

    def backward(self, loss: "Tensor", seed: float = 1.0) -> Dict[str, np.ndarray]:
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")

        grads: List[Optional[np.ndarray]] = [None] * self._n_slots
        grads[loss._slot] = np.full(loss.shape, float(seed))
        for out_slot, parents, vjp in reversed(self._nodes):
            g = grads[out_slot]
            if g is None:
                continue
            for parent, pg in zip(parents, vjp(g)):
                if pg is None or parent.tape is not self:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                slot = parent._slot
                grads[slot] = pg if grads[slot] is None else grads[slot] + pg

        out = {}
        for name, leaf in self._leaves.items():
            g = grads[leaf._slot]
            out[name] = np.zeros(leaf.shape) if g is None else g
        return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "tape", "_slot")
    # 让 ndarray 的二元运算让位给 Tensor 的反射方法
    __array_ufunc__ = None

    def __init__(self, value, tape: Optional[Tape] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self._slot = tape._slot() if tape is not None else -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor({self.value!r}, tracked={self.tape is not None})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _make(value, parents: Sequence, vjp: Callable) -> Tensor:
    parents = tuple(as_tensor(p) for p in parents)
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ContractError("operands recorded on different tapes")
            tape = p.tape
    out = Tensor(value, tape)
    if tape is not None:
        tape.record(out, parents, vjp)
    return out


# ===========================
# 逐元素运算
# ===========================
def add(a, b) -> Tensor:
    return _make(value_of(a) + value_of(b), (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    return _make(value_of(a) - value_of(b), (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    return _make(av / bv, (a, b), lambda g: (g / bv, -g * av / (bv * bv)))


def neg(a) -> Tensor:
    return _make(-value_of(a), (a,), lambda g: (-g,))


def square(a) -> Tensor:
    av = value_of(a)
    return _make(av * av, (a,), lambda g: (2.0 * av * g,))


def exp(a) -> Tensor:
    out = np.exp(value_of(a))
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    av = value_of(a)
    return _make(np.log(av), (a,), lambda g: (g / av,))


def tanh(a) -> Tensor:
    out = np.tanh(value_of(a))
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    out = expit(value_of(a))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    av = value_of(a)
    return _make(np.maximum(av, 0.0), (a,), lambda g: (g * (av > 0),))


def softplus(a) -> Tensor:
    av = value_of(a)
    return _make(np.logaddexp(0.0, av), (a,), lambda g: (g * expit(av),))


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor)；被截断处梯度为 0"""
    av = value_of(a)
    return _make(np.maximum(av, floor), (a,), lambda g: (g * (av > floor),))


# ===========================
# 线性代数 / 形状
# ===========================
def linear(x, W) -> Tensor:
    """x @ W.T，x: (B, in), W: (out, in)"""
    xv, Wv = value_of(x), value_of(W)
    return _make(xv @ Wv.T, (x, W), lambda g: (g @ Wv, g.T @ xv))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    av = value_of(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _make(av.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None) -> Tensor:
    av = value_of(a)
    n = av.size if axis is None else av.shape[axis]
    return tsum(a, axis=axis) * (1.0 / n)


def cumsum(a, axis: int = 0) -> Tensor:
    av = value_of(a)
    return _make(np.cumsum(av, axis=axis), (a,),
                 lambda g: (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),))


def reshape(a, shape) -> Tensor:
    av = value_of(a)
    return _make(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def getitem(a, idx) -> Tensor:
    av = value_of(a)

    def vjp(g):
        full = np.zeros_like(av)
        np.add.at(full, idx, g)
        return (full,)

    return _make(av[idx], (a,), vjp)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    values = [value_of(t) for t in tensors]
    cuts = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _make(np.concatenate(values, axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    values = [value_of(t) for t in tensors]
    n = len(values)
    return _make(np.stack(values, axis=axis), tuple(tensors),
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def softmax(a, axis: int = -1) -> Tensor:
    """减最大值的稳定 softmax"""
    out = _softmax(value_of(a), axis=axis)
    return _make(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))
