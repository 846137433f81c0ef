# -*- coding: utf-8 -*-
"""
合成数据生成器
"""

import numpy as np
import pytest

from src.fetchers.simulator import simulate
from src.records import SimConfig
from src.utils.errors import ValidationError


def test_geometric_survival_law():
    n = 10_000
    ds = simulate(SimConfig(n_subjects=n, n_events=1, n_features=1, base_hazards=(0.1,),
                            covariate_effect=(0.0,), censoring_hazard=0.0, t_m=10, seed=1,
                            min_obs_length=1, max_obs_length=2))
    survived = np.mean([r.observed_time > 5 for r in ds.records])
    p = 0.9 ** 5
    se = np.sqrt(p * (1 - p) / n)
    assert abs(survived - p) <= 3 * se


def test_zero_hazards_censor_everyone_at_window_end():
    ds = simulate(SimConfig(n_subjects=50, n_events=2, base_hazards=(0.0, 0.0), covariate_effect=(0.0, 0.0),
                            censoring_hazard=0.0, t_m=7, seed=2))
    assert all(not r.event_indicator and r.observed_time == 7 for r in ds.records)


def test_symmetric_hazards_give_balanced_event_types():
    n = 4000
    ds = simulate(SimConfig(n_subjects=n, n_events=2, n_features=1, base_hazards=(0.05, 0.05),
                            covariate_effect=(0.0, 0.0), censoring_hazard=0.0, t_m=20, seed=5,
                            min_obs_length=1, max_obs_length=2))
    types = np.array([r.event_type for r in ds.records if r.event_indicator])
    share = np.mean(types == 1)
    se = np.sqrt(0.25 / types.size)
    assert abs(share - 0.5) <= 3 * se


def test_same_seed_same_data():
    cfg = SimConfig(n_subjects=30, seed=8)
    a, b = simulate(cfg), simulate(cfg)
    for ra, rb in zip(a.records, b.records):
        assert ra.observed_time == rb.observed_time and ra.event_type == rb.event_type
        assert np.array_equal(ra.series.values, rb.series.values, equal_nan=True)
    assert all(np.array_equal(a.oracle_hazards[i], b.oracle_hazards[i]) for i in a.ids)


def test_oracle_hazards_are_proper_distributions(small_sim):
    for sid in small_sim.ids:
        lam = small_sim.oracle_hazards[sid]
        assert lam.shape == (small_sim.n_events + 1, 6)
        assert np.all(lam >= 0)
        np.testing.assert_allclose(lam.sum(axis=0), 1.0, atol=1e-12)


def test_every_subject_starts_at_time_zero(small_sim):
    assert all(r.series.timestamps[0] == 0.0 for r in small_sim.records)


def test_planted_regimes_are_recorded():
    ds = simulate(SimConfig(n_subjects=40, regime_means=(-2.0, 2.0), seed=4))
    assert set(ds.oracle_regimes.values()) <= {0, 1}
    assert len(ds.oracle_regimes) == 40


def test_heavy_clamping_is_reported():
    ds = simulate(SimConfig(n_subjects=50, base_hazards=(0.5, 0.45), covariate_effect=(2.0, 2.0), seed=0))
    assert ds.warnings and "clamping" in ds.warnings[0]


def test_base_hazards_summing_to_one_rejected():
    with pytest.raises(ValidationError):
        SimConfig(base_hazards=(0.6, 0.4))
