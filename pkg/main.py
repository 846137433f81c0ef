# -*- coding: utf-8 -*-
"""
OdeRisk 主程序
功能: 串起 生成 -> 训练 -> 预测 -> 评估 -> 聚类 的完整流程，每个命令结束写运行清单
用法示例:
    python main.py simulate --config config/sim_default.json --out data/sim
    python main.py train    --data data/sim --config config/train_default.json --out runs/sim
    python main.py predict  --data data/sim --checkpoint runs/sim/checkpoint.parquet --out runs/sim/pred.csv \
                            --split-file runs/sim/splits.csv --split test
    python main.py evaluate --predictions runs/sim/pred.csv --data data/sim --out runs/sim/metrics.csv \
                            --split-file runs/sim/splits.csv --split test
    python main.py cluster  --data data/sim --checkpoint runs/sim/checkpoint.parquet --event 1 --k 4 --out runs/sim/clusters
    python main.py robustness --data data/sim --checkpoint runs/sim/checkpoint.parquet --out runs/sim/robustness.csv
    python main.py sweep    --data data/sim --config config/train_default.json --grid grid.json --out runs/sweep
退出码: 0 成功 / 2 输入校验失败 / 3 数值失败 / 1 其它
"""

import argparse
import json
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from config.settings import (
    CHECKPOINT_FILE, DEFAULT_N_CLUSTERS, DEFAULT_SIM_CONFIG, DEFAULT_TRAIN_CONFIG, EVAL_PERCENTILES,
    FEATURES_FILE, HISTORY_FILE, MANIFEST_FILE, ORACLE_FILE, OUTCOMES_FILE, SPLIT_FRACTIONS, SPLITS_FILE,
)
from src.analysis.clustering import cluster_incidence, kmeans, latent_summary
from src.evaluation.metrics import evaluate, mean_td_auc, rmft
from src.fetchers.csv_loader import ingest_long_csv
from src.fetchers.simulator import simulate
from src.processors.sampling import drop_measurements, split
from src.records import SimConfig, SurvivalDataset
from src.solvers.dopri5 import SolverSettings
from src.storage.checkpoint_store import CheckpointStore
from src.storage.db_connector import DuckDBConnector
from src.storage.exporters import dataset_frames, oracle_frame, read_oracle, write_csv
from src.storage.manifest import RunManifest
from src.training.config import TrainConfig
from src.training.predictor import predict, predict_reconstruction
from src.training.sweep import sweep
from src.training.trainer import train
from src.utils.errors import OdeRiskError, ValidationError
from src.utils.logger import get_logger, set_console_level

logger = get_logger("Main", "oderisk.log")


# ==========================================
# 公共辅助
# ==========================================
def _declared_events(data_dir: Path) -> Optional[int]:
    """模拟数据目录里的清单记录了事件数 b (结局表里未必每类事件都出现)"""
    manifest = data_dir / MANIFEST_FILE
    if not manifest.exists():
        return None
    try:
        info = json.loads(manifest.read_text(encoding="utf-8"))
        return int(info["config"]["n_events"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return None


def load_dataset(data_dir, n_events: Optional[int] = None, bin_width: float = 1.0) -> SurvivalDataset:
    data_dir = Path(data_dir)
    features, outcomes = data_dir / FEATURES_FILE, data_dir / OUTCOMES_FILE
    for path in (features, outcomes):
        if not path.exists():
            raise ValidationError(f"missing input file: {path}")
    if n_events is None:
        n_events = _declared_events(data_dir)
    dataset = ingest_long_csv(features, outcomes, n_events=n_events, bin_width=bin_width)
    oracle = data_dir / ORACLE_FILE
    if oracle.exists():
        hazards, regimes = read_oracle(oracle)
        dataset = SurvivalDataset(dataset.records, dataset.n_events, dataset.feature_names, dataset.bin_width,
                                  hazards, dataset.warnings, regimes)
    return dataset


def select_split(dataset: SurvivalDataset, split_file: Optional[str], split_name: Optional[str]) -> SurvivalDataset:
    if not split_file:
        return dataset
    splits = pd.read_csv(split_file, dtype={"id": str, "split": str})
    if split_name:
        splits = splits[splits["split"] == split_name]
    wanted = set(splits["id"])
    unknown = sorted(wanted - set(dataset.ids))
    if unknown:
        raise ValidationError(f"split file names unknown ids: {unknown[:10]}")
    # 保持数据集原有顺序
    return dataset.select([i for i in dataset.ids if i in wanted])


def solver_from(config: dict) -> SolverSettings:
    return SolverSettings.from_dict(config.get("solver", {}))


def _finish(manifest: RunManifest, out_dir: Path, started: float):
    manifest.wall_time_sec = round(time.time() - started, 3)
    manifest.write(out_dir / MANIFEST_FILE)


# ==========================================
# 1. 🎲 生成合成数据
# ==========================================
def run_simulate(args) -> None:
    started = time.time()
    config = SimConfig.from_json(args.config)
    out_dir = Path(args.out)
    logger.info(f"🚀 Simulating {config.n_subjects} subjects (b={config.n_events}, seed={config.seed})")

    dataset = simulate(config)
    features, outcomes = dataset_frames(dataset)
    outputs = [
        write_csv(features, out_dir / FEATURES_FILE),
        write_csv(outcomes, out_dir / OUTCOMES_FILE),
        write_csv(oracle_frame(dataset), out_dir / ORACLE_FILE),
    ]
    manifest = RunManifest("simulate", config.to_dict(), {"seed": config.seed}, [str(args.config)],
                           [str(p) for p in outputs], notes=list(dataset.warnings))
    _finish(manifest, out_dir, started)


# ==========================================
# 2. 🏋️ 训练
# ==========================================
def run_train(args) -> None:
    started = time.time()
    config = TrainConfig.from_json(args.config)
    out_dir = Path(args.out)
    dataset = load_dataset(args.data, args.n_events, config.bin_width)
    train_set, valid_set, test_set = split(dataset, SPLIT_FRACTIONS, seed=config.seed)
    logger.info(f"ℹ️ Split {len(dataset)} subjects -> train {len(train_set)} / valid {len(valid_set)} / "
                f"test {len(test_set)}")

    splits = pd.DataFrame(
        [(i, name) for name, part in (("train", train_set), ("valid", valid_set), ("test", test_set))
         for i in part.ids],
        columns=["id", "split"],
    )
    result = train(train_set, valid_set, config, progress=not args.quiet)

    ckpt = CheckpointStore(out_dir / CHECKPOINT_FILE).save(
        result.params, config.to_dict(), config.seed, dataset.feature_names)
    outputs = [
        ckpt,
        write_csv(result.history, out_dir / HISTORY_FILE),
        write_csv(splits, out_dir / SPLITS_FILE),
    ]
    manifest = RunManifest("train", config.to_dict(), {"seed": config.seed}, [str(args.data), str(args.config)],
                           [str(p) for p in outputs], notes=list(result.warnings))
    _finish(manifest, out_dir, started)


# ==========================================
# 3. 🔮 预测
# ==========================================
def run_predict(args) -> None:
    started = time.time()
    ckpt = CheckpointStore(args.checkpoint).load()
    params = ckpt.params
    t_m = args.t_m or int(ckpt.config.get("t_m", 1))
    settings = solver_from(ckpt.config)
    dataset = load_dataset(args.data, params.arch.n_events, float(ckpt.config.get("bin_width", 1.0)))
    dataset = select_split(dataset, args.split_file, args.split)

    curves = predict(params, dataset, t_m, settings, n_samples=args.n_samples, seed=args.seed)
    out_path = Path(args.out)
    outputs = [write_csv(curves.to_frame(), out_path)]

    if args.rmft_horizon:
        rows = []
        for k in range(1, params.arch.n_events + 1):
            values = rmft(curves.F[:, k - 1, :], args.rmft_horizon, dataset.bin_width) if len(dataset) else []
            rows.append(pd.DataFrame({"id": list(curves.ids), "event": k, "rmft": values}))
        rmft_path = out_path.with_name(f"{out_path.stem}_rmft.csv")
        outputs.append(write_csv(pd.concat(rows, ignore_index=True), rmft_path))

    if args.reconstruction:
        outputs.append(write_csv(predict_reconstruction(params, dataset, t_m, settings), args.reconstruction))

    manifest = RunManifest("predict", {**ckpt.config, "t_m": t_m, "n_samples": args.n_samples},
                           {"seed": args.seed}, [str(args.data), str(args.checkpoint)], [str(p) for p in outputs])
    _finish(manifest, out_path.parent, started)


# ==========================================
# 4. 📏 评估
# ==========================================
def _joined_predictions(pred_path: Path, dataset: SurvivalDataset) -> np.ndarray:
    """
    用 DuckDB 把预测长表按 id 对齐到结局表，返回 (n, b, t_m+1) 的 F 数组
    数据集中有 id 在预测里缺失时报错并列出
    """
    outcomes = pd.DataFrame({"id": dataset.ids, "pos": np.arange(len(dataset))})
    with DuckDBConnector() as db:
        db.register_csv("preds", pred_path, all_varchar=True)
        db.register_frame("outcomes", outcomes)
        columns = db.query("SELECT * FROM preds LIMIT 0").columns
        f_cols = sorted((c for c in columns if c.startswith("F_")), key=lambda c: int(c.split("_")[1]))
        if "id" not in columns or "t" not in columns or not f_cols:
            raise ValidationError(f"{pred_path}: expected columns id, t, S, F_1..F_b")

        missing = db.query(
            "SELECT o.id FROM outcomes o LEFT JOIN (SELECT DISTINCT id FROM preds) p ON o.id = p.id "
            "WHERE p.id IS NULL ORDER BY o.pos"
        )["id"].tolist()
        if missing:
            raise ValidationError(f"predictions missing {len(missing)} id(s): {missing}")

        select_f = ", ".join(f"CAST(p.{c} AS DOUBLE) AS {c}" for c in f_cols)
        joined = db.query(
            f"SELECT o.pos, CAST(p.t AS INTEGER) AS t, {select_f} "
            f"FROM outcomes o JOIN preds p ON o.id = p.id ORDER BY o.pos, t"
        )
    n = len(dataset)
    if n == 0:
        return np.zeros((0, len(f_cols), 1))
    counts = joined.groupby("pos").size()
    if counts.nunique() != 1:
        raise ValidationError("prediction rows differ in length across subjects")
    T = int(counts.iloc[0])
    F = joined[f_cols].to_numpy(dtype=np.float64).reshape(n, T, len(f_cols))
    return F.transpose(0, 2, 1)


def run_evaluate(args) -> None:
    started = time.time()
    pred_path = Path(args.predictions)
    if not pred_path.exists():
        raise ValidationError(f"missing predictions file: {pred_path}")
    header = pd.read_csv(pred_path, nrows=0).columns
    n_events = sum(1 for c in header if c.startswith("F_"))
    dataset = load_dataset(args.data, n_events or None)
    dataset = select_split(dataset, args.split_file, args.split)

    F = _joined_predictions(pred_path, dataset)
    report = evaluate(F, dataset.records, tuple(args.percentiles))
    out_path = Path(args.out)
    outputs = [write_csv(report, out_path)]
    manifest = RunManifest("evaluate", {"percentiles": list(args.percentiles), "split": args.split}, {},
                           [str(pred_path), str(args.data)], [str(p) for p in outputs])
    _finish(manifest, out_path.parent, started)


# ==========================================
# 5. 🧩 潜状态聚类
# ==========================================
def run_cluster(args) -> None:
    started = time.time()
    ckpt = CheckpointStore(args.checkpoint).load()
    params = ckpt.params
    settings = solver_from(ckpt.config)
    horizon = args.horizon or int(ckpt.config.get("t_m", 1))
    dataset = load_dataset(args.data, params.arch.n_events, float(ckpt.config.get("bin_width", 1.0)))
    dataset = select_split(dataset, args.split_file, args.split)

    summary = latent_summary(params, dataset, args.event, horizon, settings)
    result = kmeans(summary, args.k, seed=args.seed)
    logger.info(f"✅ k-means converged in {result.n_iter} iteration(s), inertia {result.inertia:.6g}")

    out_dir = Path(args.out)
    labels = pd.DataFrame({"id": dataset.ids, "cluster": result.labels})
    incidence = cluster_incidence(result.labels, dataset.records, dataset.n_events, n_clusters=args.k)
    outputs = [
        write_csv(labels, out_dir / "clusters.csv"),
        write_csv(incidence, out_dir / "cluster_curves.csv"),
    ]
    manifest = RunManifest("cluster", {**ckpt.config, "event": args.event, "k": args.k, "horizon": horizon},
                           {"seed": args.seed}, [str(args.data), str(args.checkpoint)], [str(p) for p in outputs])
    _finish(manifest, out_dir, started)


# ==========================================
# 6. 🕳️ 缺失鲁棒性
# ==========================================
def robustness_table(params, dataset: SurvivalDataset, t_m: int, settings: SolverSettings,
                     rates: Sequence[float], replicates: int, seed: int = 0) -> pd.DataFrame:
    rows = []
    for rate in rates:
        n_rep = 1 if rate == 0 else replicates
        for r in range(n_rep):
            dropped = drop_measurements(dataset, rate, seed=seed + r)
            curves = predict(params, dropped, t_m, settings)
            for k in range(1, dataset.n_events + 1):
                rows.append({"rate": rate, "replicate": r, "event": k,
                             "mean_auc": mean_td_auc(curves, dropped.records, k)})
        logger.info(f"✅ Missing rate {rate}: {n_rep} replicate(s) done")
    return pd.DataFrame(rows, columns=["rate", "replicate", "event", "mean_auc"])


def run_robustness(args) -> None:
    started = time.time()
    ckpt = CheckpointStore(args.checkpoint).load()
    params = ckpt.params
    t_m = args.t_m or int(ckpt.config.get("t_m", 1))
    settings = solver_from(ckpt.config)
    dataset = load_dataset(args.data, params.arch.n_events, float(ckpt.config.get("bin_width", 1.0)))
    dataset = select_split(dataset, args.split_file, args.split)

    table = robustness_table(params, dataset, t_m, settings, args.rates, args.replicates, args.seed)
    out_path = Path(args.out)
    outputs = [write_csv(table, out_path)]
    manifest = RunManifest("robustness", {"rates": list(args.rates), "replicates": args.replicates, "t_m": t_m},
                           {"seed": args.seed}, [str(args.data), str(args.checkpoint)], [str(p) for p in outputs])
    _finish(manifest, out_path.parent, started)


# ==========================================
# 7. 🔁 配置扫描
# ==========================================
def run_sweep(args) -> None:
    started = time.time()
    base = TrainConfig.from_json(args.config)
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read sweep grid {args.grid}: {e}") from e
    if not isinstance(grid, dict):
        raise ValidationError("sweep grid must be a JSON object of field -> list of values")

    dataset = load_dataset(args.data, args.n_events, base.bin_width)
    train_set, valid_set, _ = split(dataset, SPLIT_FRACTIONS, seed=base.seed)
    summary = sweep(train_set, valid_set, base, grid)

    out_dir = Path(args.out)
    outputs = [write_csv(summary, out_dir / "sweep.csv")]
    manifest = RunManifest("sweep", {"base": base.to_dict(), "grid": grid}, {"seed": base.seed},
                           [str(args.data), str(args.config), str(args.grid)], [str(p) for p in outputs])
    _finish(manifest, out_dir, started)


# ==========================================
# 主入口
# ==========================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="OdeRisk: latent-ODE competing-risks survival pipeline")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="控制台日志级别 (logs/ 下的文件日志不受影响)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="生成合成数据 (特征 / 结局 / 真实风险)")
    p.add_argument("--config", default=str(DEFAULT_SIM_CONFIG))
    p.add_argument("--out", required=True, help="输出目录")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("train", help="训练并保存最佳检查点")
    p.add_argument("--data", required=True, help="含 features.csv / outcomes.csv 的目录")
    p.add_argument("--config", default=str(DEFAULT_TRAIN_CONFIG))
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--n-events", type=int, default=None, help="事件数 b (默认取数据目录清单或结局表最大值)")
    p.add_argument("--quiet", action="store_true", help="关闭进度条")
    p.set_defaults(func=run_train)

    p = sub.add_parser("predict", help="输出每个受试者的 S 与 F_k 曲线")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="曲线 CSV 路径")
    p.add_argument("--t_m", "--t-m", dest="t_m", type=int, default=None, help="预测视窗 (默认取训练配置)")
    p.add_argument("--n-samples", type=int, default=0, help="> 0 时对 z0 蒙特卡洛平均")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rmft-horizon", type=int, default=None, help="额外输出 <out>_rmft.csv")
    p.add_argument("--reconstruction", default=None, help="额外输出数据解码器重建长表")
    p.add_argument("--split-file", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(func=run_predict)

    p = sub.add_parser("evaluate", help="td-AUC / Brier 评估")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="指标 CSV 路径")
    p.add_argument("--percentiles", type=float, nargs="+", default=list(EVAL_PERCENTILES))
    p.add_argument("--split-file", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("cluster", help="潜状态 k-means 聚类 + 各簇累积发生率")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--event", type=int, default=1)
    p.add_argument("--k", type=int, default=DEFAULT_N_CLUSTERS)
    p.add_argument("--horizon", type=int, default=None, help="潜状态求和的 bin 数 (默认 t_m)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--split-file", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(func=run_cluster)

    p = sub.add_parser("robustness", help="随机删除观测后的 td-AUC 退化")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rates", type=float, nargs="+", default=[0.0, 0.5])
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--t_m", "--t-m", dest="t_m", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-file", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(func=run_robustness)

    p = sub.add_parser("sweep", help="配置网格扫描")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=str(DEFAULT_TRAIN_CONFIG))
    p.add_argument("--grid", required=True, help='JSON: {"field": [v1, v2], ...}')
    p.add_argument("--out", required=True)
    p.add_argument("--n-events", type=int, default=None)
    p.set_defaults(func=run_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_console_level(args.log_level)
    start_time = time.time()
    try:
        args.func(args)
    except OdeRiskError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ {args.command} crashed: {e}")
        return 1
    elapsed = time.time() - start_time
    logger.info(f"🎉 Command '{args.command}' completed in {elapsed:.2f} seconds.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
