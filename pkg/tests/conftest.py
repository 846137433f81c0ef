# -*- coding: utf-8 -*-
"""
测试公共夹具
路径: tests/conftest.py
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 🚑 路径补丁
project_root = str(Path(__file__).resolve().parents[1])
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.fetchers.simulator import simulate
from src.nn.params import Architecture, ModelParams
from src.records import IrregularSeries, SimConfig, SurvivalRecord
from src.solvers.dopri5 import SolverSettings
from src.training.config import TrainConfig


def make_record(sid, times, values, observed_time=5, event_type=None):
    """values: (n_obs, M) 或 (n_obs,)；event_type 为空即删失"""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    return SurvivalRecord(
        id=sid,
        observed_time=observed_time,
        event_indicator=event_type is not None,
        event_type=event_type,
        series=IrregularSeries(np.asarray(times, dtype=np.float64), values),
    )


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture(scope="session")
def small_sim():
    """20 个受试者，b=2，M=3，t_m=6"""
    return simulate(SimConfig(n_subjects=20, n_events=2, n_features=3, base_hazards=(0.08, 0.06),
                              covariate_effect=(0.8, -0.5), t_m=6, seed=3, max_obs_length=5))


@pytest.fixture
def fixed_step():
    """固定步长: 离散化精确可微，梯度校验用"""
    return SolverSettings(adaptive=False, h_init=0.5)


@pytest.fixture
def tiny_arch():
    return Architecture(n_features=3, n_events=2, latent_dim=2, embed_dim=2, hidden_dim=3,
                        ode_units=4, enc_ode_layers=2, dec_ode_layers=2, cause_units=3,
                        cause_layers=2, head_units=4)


@pytest.fixture
def tiny_params(tiny_arch):
    return ModelParams.initialize(tiny_arch, seed=11)


@pytest.fixture
def tiny_config():
    return TrainConfig(latent_dim=2, embed_dim=2, hidden_dim=3, ode_units=4, enc_ode_layers=2,
                       dec_ode_layers=2, cause_units=3, cause_layers=2, head_units=4,
                       t_m=6, batch_size=8, max_epochs=2, patience=5, seed=5,
                       survival_loss_scale=10.0, kl_warmup_epochs=0)
