# -*- coding: utf-8 -*-
"""
模型检查点存储 (Parquet)
路径: src/storage/checkpoint_store.py
功能:
    1. 每个命名张量一行: name / owner / init / shape / values (float64 列表)
    2. JSON 头 (配置、seed、维度、特征名、版本) 存在 schema metadata 里
    3. 相同参数 + 相同头 => 相同字节 (不带 pandas 元数据，键排序)
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import LIBRARY_VERSION
from src.nn.params import Architecture, ModelParams
from src.utils.errors import ValidationError
from src.utils.logger import get_logger

logger = get_logger(__name__, "storage.log")

HEADER_KEY = b"oderisk.header"
FORMAT_VERSION = 1

SCHEMA = pa.schema([
    ("name", pa.string()),
    ("owner", pa.string()),
    ("init", pa.string()),
    ("shape", pa.list_(pa.int64())),
    ("values", pa.list_(pa.float64())),
])


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    header: dict

    @property
    def config(self) -> dict:
        return self.header.get("config", {})

    @property
    def feature_names(self):
        return tuple(self.header.get("feature_names", ()))


class CheckpointStore:
    def __init__(self, path):
        self.path = Path(path)

    def save(self, params: ModelParams, config: dict, seed: int, feature_names=()) -> Path:
        header = {
            "format_version": FORMAT_VERSION,
            "library_version": LIBRARY_VERSION,
            "seed": int(seed),
            "n_features": params.arch.n_features,
            "n_events": params.arch.n_events,
            "feature_names": list(feature_names),
            "architecture": params.arch.to_dict(),
            "config": config,
        }
        names = params.names
        table = pa.table({
            "name": names,
            "owner": [params.owner(n) for n in names],
            "init": [params.init_of(n) for n in names],
            "shape": [list(params[n].shape) for n in names],
            "values": [params[n].ravel().tolist() for n in names],
        }, schema=SCHEMA)
        meta = {HEADER_KEY: json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")}
        table = table.replace_schema_metadata(meta)

        self.path.parent.mkdir(parents=True, exist_ok=True)
        pq.write_table(table, self.path, compression="snappy")
        logger.info(f"💾 Checkpoint saved: {self.path} ({params.n_parameters} values)")
        return self.path

    def load(self) -> Checkpoint:
        if not self.path.exists():
            raise ValidationError(f"checkpoint not found: {self.path}")
        try:
            table = pq.read_table(self.path)
            header = json.loads(table.schema.metadata[HEADER_KEY].decode("utf-8"))
        except (OSError, KeyError, TypeError, pa.ArrowInvalid, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read checkpoint {self.path}: {e}") from e
        if header.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported checkpoint format {header.get('format_version')}")

        arch = Architecture(**header["architecture"])
        rows = table.to_pylist()
        values = {r["name"]: np.asarray(r["values"], dtype=np.float64).reshape(r["shape"]) for r in rows}
        inits = {r["name"]: r["init"] for r in rows}
        params = ModelParams(arch, values, inits)
        logger.info(f"✅ Checkpoint loaded: {self.path}")
        return Checkpoint(params, header)
