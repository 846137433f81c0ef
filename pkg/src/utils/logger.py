# -*- coding: utf-8 -*-
"""
通用日志模块
路径: src/utils/logger.py
功能:
    1. get_logger: 每个子系统一个日志文件 (training.log / predict.log ...)，控制台 + 文件滚动
    2. set_console_level: 命令行 --log-level 统一调整所有子系统的控制台输出，文件日志保持完整
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, Union

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[2])
if project_root not in sys.path:
    sys.path.append(project_root)

from config.settings import LOG_DIR

# 时间 - 模块名 - 日志级别 - 消息
DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
MAX_BYTES = 10 * 1024 * 1024
BACKUP_COUNT = 5

# 由 get_logger 创建的 logger，按名称登记
_REGISTRY: Dict[str, logging.Logger] = {}
_console_level = logging.INFO


def get_logger(name: str = "OdeRisk", log_filename: str = "oderisk.log", level=logging.INFO):
    """
    获取配置好的 Logger 对象

    :param name: 日志记录器名称 (通常传 __name__)
    :param log_filename: 日志文件名 (存放在 logs/ 目录下，同一子系统的模块共用一个文件)
    :param level: 文件日志级别
    :return: logger 实例
    """
    logger = logging.getLogger(name)

    # 防止重复添加 Handler
    if logger.handlers:
        return logger

    logger.setLevel(level)
    formatter = logging.Formatter(DEFAULT_FORMAT, datefmt=DATE_FORMAT)

    # 1. 控制台 Handler，级别跟随 set_console_level
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(max(level, _console_level))
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # 2. 文件 Handler (10MB 滚动, 保留5个历史文件)
    LOG_DIR.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(LOG_DIR / log_filename, maxBytes=MAX_BYTES,
                                       backupCount=BACKUP_COUNT, encoding="utf-8")
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    _REGISTRY[name] = logger
    return logger


def set_console_level(level: Union[int, str]) -> int:
    """调整所有已登记 logger 的控制台级别，之后新建的 logger 同样生效；返回数值级别"""
    global _console_level
    numeric = logging.getLevelName(level.upper()) if isinstance(level, str) else int(level)
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level {level!r}")
    _console_level = numeric
    for logger in _REGISTRY.values():
        for handler in logger.handlers:
            if not isinstance(handler, RotatingFileHandler):
                handler.setLevel(numeric)
    return numeric
