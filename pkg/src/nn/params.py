# -*- coding: utf-8 -*-
"""
模型参数容器
路径: src/nn/params.py
功能:
    1. Architecture: 由数据维度 + 训练配置确定的网络形状
    2. ModelParams: 按名字存放的 float64 参数张量 (只读)，记录归属模块与初始化方式
命名规则: "<模块前缀>.<张量名>"，例如 enc_ode.W0、gru.W_r、cause2.b1、head.W
"""

from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from src.nn.autodiff import Tape, Tensor
from src.utils.errors import ContractError, DimensionError, NumericalError, ValidationError

# 前缀 -> 归属模块
OWNERS = {
    "enc_ode": "encoder_ode",
    "gru": "gru",
    "post": "posterior",
    "dec_ode": "decoder_ode",
    "cause": "hazard",              # cause1 ... causeb
    "head": "hazard",               # 共享输出层
    "recon": "reconstruction",
}


def owner_of(name: str) -> str:
    prefix = name.split(".", 1)[0]
    if prefix.startswith("cause"):
        prefix = "cause"
    if prefix not in OWNERS:
        raise ContractError(f"parameter '{name}' has no known owner prefix")
    return OWNERS[prefix]


@dataclass(frozen=True)
class Architecture:
    n_features: int
    n_events: int
    latent_dim: int = 4      # z₀ 与潜轨迹维度
    embed_dim: int = 4       # 病因模块输出的嵌入维度
    hidden_dim: int = 8      # GRU / 编码器 ODE 的隐状态维度
    ode_units: int = 16
    enc_ode_layers: int = 3
    dec_ode_layers: int = 3
    cause_units: int = 10
    cause_layers: int = 2
    head_units: int = 16     # 后验头与重构头的隐藏层宽度

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise ValidationError(f"architecture field {name} must be a positive integer, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


def _glorot(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _mlp_shapes(prefix: str, n_in: int, n_hidden: int, n_out: int, n_layers: int):
    dims = [n_in] + [n_hidden] * (n_layers - 1) + [n_out]
    for i in range(n_layers):
        yield f"{prefix}.W{i}", (dims[i + 1], dims[i]), "glorot_uniform"
        yield f"{prefix}.b{i}", (dims[i + 1],), "zeros"


def parameter_layout(arch: Architecture) -> List[Tuple[str, tuple, str]]:
    """(名字, 形状, 初始化方式)，顺序固定"""
    H, L0, L, M, b = arch.hidden_dim, arch.latent_dim, arch.embed_dim, arch.n_features, arch.n_events
    layout = list(_mlp_shapes("enc_ode", H, arch.ode_units, H, arch.enc_ode_layers))
    gru_in = 3 * M
    layout += [
        ("gru.W_r", (H, gru_in + H), "glorot_uniform"),
        ("gru.b_r", (H,), "zeros"),
        ("gru.W_u", (H, gru_in + H), "glorot_uniform"),
        ("gru.b_u", (H,), "ones"),
        ("gru.W_n", (H, gru_in), "glorot_uniform"),
        ("gru.U_n", (H, H), "glorot_uniform"),
        ("gru.b_n", (H,), "zeros"),
    ]
    layout += list(_mlp_shapes("post", H, arch.head_units, 2 * L0, 2))
    layout += list(_mlp_shapes("dec_ode", L0, arch.ode_units, L0, arch.dec_ode_layers))
    for k in range(1, b + 1):
        layout += list(_mlp_shapes(f"cause{k}", L0, arch.cause_units, L, arch.cause_layers))
    layout += [("head.W", (b + 1, b * L), "glorot_uniform"), ("head.b", (b + 1,), "zeros")]
    layout += list(_mlp_shapes("recon", L0, arch.head_units, M, 2))
    return layout


class ModelParams:
    """
    只读参数集合；优化器通过 with_values 生成新对象
    """

    def __init__(self, arch: Architecture, values: Mapping[str, np.ndarray], inits: Mapping[str, str]):
        self.arch = arch
        self._values: Dict[str, np.ndarray] = {}
        self._inits: Dict[str, str] = {}
        expected = {name: (shape, init) for name, shape, init in parameter_layout(arch)}
        if set(values) != set(expected):
            missing = sorted(set(expected) - set(values))
            extra = sorted(set(values) - set(expected))
            raise DimensionError(f"parameter names do not match architecture (missing {missing}, extra {extra})")
        for name, (shape, init) in expected.items():
            arr = np.array(values[name], dtype=np.float64, copy=True)
            if arr.shape != shape:
                raise DimensionError(f"{name}: shape {arr.shape}, architecture expects {shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"parameter {name} is not finite")
            arr.setflags(write=False)
            self._values[name] = arr
            self._inits[name] = inits.get(name, init)

    @classmethod
    def initialize(cls, arch: Architecture, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        values, inits = {}, {}
        for name, shape, init in parameter_layout(arch):
            if init == "glorot_uniform":
                values[name] = _glorot(rng, shape)
            elif init == "ones":
                values[name] = np.ones(shape)
            else:
                values[name] = np.zeros(shape)
            inits[name] = init
        return cls(arch, values, inits)

    # ---------- 访问 ----------
    @property
    def names(self) -> List[str]:
        return list(self._values)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def items(self):
        return self._values.items()

    def init_of(self, name: str) -> str:
        return self._inits[name]

    def owner(self, name: str) -> str:
        return owner_of(name)

    def group(self, owner: str) -> List[str]:
        return [n for n in self._values if owner_of(n) == owner]

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self._values.values()))

    # ---------- 与 tape 的衔接 ----------
    def bind(self, tape: Tape) -> Dict[str, Tensor]:
        """把所有参数登记为 tape 的叶子"""
        return {name: tape.watch(v, name) for name, v in self._values.items()}

    def constants(self) -> Dict[str, Tensor]:
        """不记录梯度的参数视图 (推理用)"""
        return {name: Tensor(v) for name, v in self._values.items()}

    def with_values(self, values: Mapping[str, np.ndarray]) -> "ModelParams":
        merged = dict(self._values)
        merged.update(values)
        return ModelParams(self.arch, merged, self._inits)

    def equals(self, other: "ModelParams") -> bool:
        return (self.arch == other.arch and self.names == other.names
                and all(np.array_equal(self[n], other[n]) for n in self.names))
