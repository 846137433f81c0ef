# -*- coding: utf-8 -*-
"""
DuckDB 数据库连接器
路径: src/storage/db_connector.py
功能:
    1. 管理 DuckDB 连接 (默认内存库)
    2. 将 CSV 输出 / DataFrame 注册为视图
    3. 提供 SQL 查询接口，返回 DataFrame
"""

import sys
from pathlib import Path
from typing import List, Optional

import duckdb
import pandas as pd

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from src.utils.errors import ValidationError
from src.utils.logger import get_logger

logger = get_logger(__name__, "db_connector.log")


class DuckDBConnector:
    def __init__(self, db_path: str = ":memory:", read_only: bool = False):
        """
        :param db_path: 数据库文件路径，默认 ":memory:"
        :param read_only: 是否只读模式
        """
        self.db_path = db_path
        self.read_only = read_only
        self.conn = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.disconnect()

    def connect(self):
        try:
            self.conn = duckdb.connect(database=self.db_path, read_only=self.read_only)
            logger.debug(f"✅ DuckDB connected: {self.db_path} (ReadOnly={self.read_only})")
        except Exception as e:
            logger.error(f"❌ DuckDB connection failed: {e}")
            raise

    def disconnect(self):
        if self.conn:
            self.conn.close()
            self.conn = None

    def register_csv(self, view_name: str, csv_path, all_varchar: bool = False):
        """把 CSV 文件注册为视图 (带表头)"""
        if not self.conn:
            self.connect()
        path = Path(csv_path)
        if not path.exists():
            raise ValidationError(f"file not found: {path}")
        options = ", all_varchar=true" if all_varchar else ""
        sql = (f"CREATE OR REPLACE VIEW {view_name} AS "
               f"SELECT * FROM read_csv_auto('{path.as_posix()}', header=true{options})")
        self.conn.execute(sql)
        logger.debug(f"✅ View created: {view_name} -> {path}")

    def register_frame(self, view_name: str, df: pd.DataFrame):
        if not self.conn:
            self.connect()
        self.conn.register(view_name, df)

    def query(self, sql: str, params: Optional[List] = None) -> pd.DataFrame:
        """执行查询并返回 DataFrame"""
        if not self.conn:
            self.connect()
        try:
            if params:
                return self.conn.execute(sql, params).df()
            return self.conn.execute(sql).df()
        except duckdb.Error as e:
            logger.error(f"❌ Query failed: {sql} | Error: {e}")
            raise ValidationError(f"query failed: {e}") from e
