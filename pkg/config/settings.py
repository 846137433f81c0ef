# -*- coding: utf-8 -*-
"""
全局配置文件
路径: config/settings.py
功能: 管理路径、全局数值常量、默认超参
"""
from pathlib import Path

# ===========================
# 1. 路径配置
# ===========================
# 项目根目录 (settings.py 在 config/ 下，向上一级)
BASE_DIR = Path(__file__).resolve().parents[1]
CONFIG_DIR = BASE_DIR / "config"
DATA_DIR = BASE_DIR / "data"
RUNS_DIR = BASE_DIR / "runs"
LOG_DIR = BASE_DIR / "logs"

DEFAULT_SIM_CONFIG = CONFIG_DIR / "sim_default.json"
DEFAULT_TRAIN_CONFIG = CONFIG_DIR / "train_default.json"

# 数据目录内的固定文件名
FEATURES_FILE = "features.csv"
OUTCOMES_FILE = "outcomes.csv"
ORACLE_FILE = "oracle.csv"
SPLITS_FILE = "splits.csv"
CHECKPOINT_FILE = "checkpoint.parquet"
HISTORY_FILE = "history.csv"
MANIFEST_FILE = "manifest.json"

# ===========================
# 2. 数值常量
# ===========================
PROB_FLOOR = 1e-12      # log 之前的概率下限
SIGMA_FLOOR = 1e-6      # 后验标准差下限 (softplus 之后再加)
FLOAT_FORMAT = "%.17g"  # CSV 浮点格式，保证重跑逐字节一致

# ODE 求解器默认值 (RK45 常用默认)
SOLVER_RTOL = 1e-3
SOLVER_ATOL = 1e-4
SOLVER_MAX_STEPS = 10_000
SOLVER_H_MIN = 1e-10
SOLVER_INIT_DIVISOR = 10.0  # h_init = span / 10

# 优化器
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# ===========================
# 3. 数据划分与评估
# ===========================
SPLIT_FRACTIONS = (0.55, 0.15, 0.30)
EVAL_PERCENTILES = (25, 50, 75)
DEFAULT_N_CLUSTERS = 4
SIM_CLAMP_WARN_FRACTION = 0.01

# 生成器 AR(1) 潜变量
SIM_AR_COEF = 0.9

# 写入检查点 / 运行清单的版本号
LIBRARY_VERSION = "0.1.0"
