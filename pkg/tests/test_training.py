# -*- coding: utf-8 -*-
"""
训练循环 / 优化器 / 配置 / 预测
"""

import json

import numpy as np
import pytest

from src.nn.params import ModelParams
from src.records import SurvivalDataset
from src.training import trainer as trainer_module
from src.training.config import REQUIRED_KEYS, TrainConfig
from src.training.losses import LossTerms
from src.training.optimizer import Adam
from src.training.predictor import predict, predict_reconstruction
from src.training.sweep import sweep
from src.training.trainer import HISTORY_COLUMNS, evaluate_loss, train
from src.utils.errors import ContractError, DimensionError, NumericalError, ValidationError


@pytest.fixture(scope="module")
def halves(small_sim):
    """前 14 个训练，后 6 个验证"""
    records = small_sim.records
    return (SurvivalDataset(records[:14], small_sim.n_events, small_sim.feature_names),
            SurvivalDataset(records[14:], small_sim.n_events, small_sim.feature_names))


# ---------- config ----------
def test_missing_required_field_is_named(tmp_path):
    data = TrainConfig().to_dict()
    del data["patience"]
    path = tmp_path / "train.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(ValidationError, match="patience"):
        TrainConfig.from_json(path)


def test_config_round_trips_through_json(tmp_path):
    config = TrainConfig(t_m=7, seed=3)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    assert TrainConfig.from_json(path) == config
    assert set(REQUIRED_KEYS) <= set(config.to_dict())


def test_config_rejects_unknown_and_invalid_fields():
    with pytest.raises(ValidationError):
        TrainConfig().with_overrides(dropout=0.5)
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValidationError):
        TrainConfig(survival_loss_scale=-1.0)


def test_kl_warmup_is_linear():
    config = TrainConfig(kl_warmup_epochs=4)
    assert [config.kl_weight(e) for e in (1, 2, 4, 9)] == [0.25, 0.5, 1.0, 1.0]
    assert TrainConfig(kl_warmup_epochs=0).kl_weight(1) == 1.0


# ---------- Adam ----------
def test_first_adam_step_moves_by_learning_rate(tiny_params):
    grads = {n: np.ones_like(tiny_params[n]) for n in tiny_params.names}
    grads["head.b"] = -np.ones_like(tiny_params["head.b"])
    updated = Adam(0.1).step(tiny_params, grads)
    np.testing.assert_allclose(updated["head.W"] - tiny_params["head.W"], -0.1, rtol=1e-6)
    np.testing.assert_allclose(updated["head.b"] - tiny_params["head.b"], 0.1, rtol=1e-6)
    assert not updated.equals(tiny_params)


def test_adam_requires_every_gradient(tiny_params):
    with pytest.raises(ContractError):
        Adam(0.1).step(tiny_params, {"head.W": np.zeros_like(tiny_params["head.W"])})


# ---------- train ----------
def test_training_reduces_loss(halves, tiny_config):
    train_set, valid_set = halves
    config = tiny_config.with_overrides(max_epochs=5, learning_rate=0.02)
    result = train(train_set, valid_set, config, progress=False)
    history = result.history
    assert list(history.columns) == HISTORY_COLUMNS
    assert history["epoch"].tolist()[0] == 0
    assert history["train_loss"].iloc[-1] < history["train_loss"].iloc[0]
    assert result.best_epoch == int(history["valid_loss"].idxmin())


@pytest.mark.parametrize("scale", [50.0, 100.0, 150.0])
def test_large_survival_loss_scale_stays_finite(halves, tiny_config, scale):
    config = tiny_config.with_overrides(survival_loss_scale=scale, max_epochs=3, learning_rate=0.02)
    result = train(*halves, config, progress=False)
    assert result.history["epoch"].tolist() == [0, 1, 2, 3]
    assert np.isfinite(result.history.drop(columns="epoch").to_numpy(dtype=np.float64)).all()
    assert all(np.all(np.isfinite(result.params[n])) for n in result.params.names)


def test_zero_patience_trains_one_epoch(halves, tiny_config):
    result = train(*halves, tiny_config.with_overrides(patience=0, max_epochs=10), progress=False)
    assert result.history["epoch"].max() == 1


def test_training_is_deterministic(halves, tiny_config):
    a = train(*halves, tiny_config, progress=False)
    b = train(*halves, tiny_config, progress=False)
    assert a.history.equals(b.history)
    assert a.params.equals(b.params)
    assert a.best_epoch == b.best_epoch


def test_best_params_score_the_recorded_validation_loss(halves, tiny_config):
    train_set, valid_set = halves
    result = train(train_set, valid_set, tiny_config, progress=False)
    recorded = result.history.loc[result.best_epoch, "valid_loss"]
    assert evaluate_loss(valid_set, result.params, tiny_config)["loss"] == pytest.approx(recorded, rel=1e-12)


def test_training_needs_both_sets(halves, tiny_config):
    train_set, _ = halves
    empty = SurvivalDataset((), train_set.n_events, train_set.feature_names)
    with pytest.raises(ContractError):
        train(train_set, empty, tiny_config, progress=False)


def test_non_finite_training_loss_names_the_batch(halves, tiny_config, monkeypatch):
    real = trainer_module.total_loss

    def poisoned(batch, records, params, config, noise=None, kl_weight=1.0, t_m=None):
        terms = real(batch, records, params, config, noise, kl_weight, t_m)
        if noise is None:
            return terms
        # 只在带噪声的训练步里注入 NaN，评估步照常
        nan_total = terms.total * np.nan
        return LossTerms(nan_total, terms.neg_elbo, terms.recon_nll, terms.kl, terms.surv_nll)

    monkeypatch.setattr(trainer_module, "total_loss", poisoned)
    with pytest.raises(NumericalError) as info:
        train(*halves, tiny_config, progress=False)
    assert "epoch=1" in str(info.value) and "batch=0" in str(info.value)


# ---------- sweep ----------
def test_sweep_reports_one_row_per_combination(halves, tiny_config):
    table = sweep(*halves, tiny_config.with_overrides(max_epochs=1),
                  {"learning_rate": [0.01, 0.02], "survival_loss_scale": [1.0]})
    assert list(table.columns) == ["learning_rate", "survival_loss_scale", "best_valid_loss",
                                   "best_epoch", "n_epochs"]
    assert len(table) == 2
    assert table["learning_rate"].tolist() == [0.01, 0.02]


def test_sweep_rejects_empty_candidates(halves, tiny_config):
    with pytest.raises(ValidationError):
        sweep(*halves, tiny_config, {"learning_rate": []})


# ---------- predict ----------
def test_predicted_curves_satisfy_identity(tiny_params, small_sim):
    curves = predict(tiny_params, small_sim, t_m=6)
    assert curves.S.shape == (20, 7) and curves.F.shape == (20, 2, 7)
    assert curves.identity_gap() <= 1e-9
    assert np.all(curves.S[:, 0] == 1.0) and np.all(curves.F[:, :, 0] == 0.0)
    assert curves.ids == tuple(small_sim.ids)


def test_trained_model_predictions_satisfy_identity(halves, tiny_config):
    train_set, held_out = halves
    result = train(train_set, held_out, tiny_config.with_overrides(max_epochs=3, learning_rate=0.02), progress=False)
    curves = predict(result.params, held_out, t_m=tiny_config.t_m)
    assert curves.identity_gap() <= 1e-9
    assert np.all(curves.S[:, 0] == 1.0) and np.all(curves.F[:, :, 0] == 0.0)
    assert np.all(np.diff(curves.S, axis=1) <= 0)
    assert np.all(np.diff(curves.F, axis=2) >= 0)


def test_prediction_is_deterministic_and_batch_independent(tiny_params, small_sim, fixed_step):
    a = predict(tiny_params, small_sim, t_m=6, settings=fixed_step)
    b = predict(tiny_params, small_sim, t_m=6, settings=fixed_step, batch_size=3)
    np.testing.assert_allclose(a.S, b.S, atol=1e-9)
    np.testing.assert_allclose(a.F, b.F, atol=1e-9)
    c = predict(tiny_params, small_sim, t_m=6, settings=fixed_step)
    np.testing.assert_array_equal(a.S, c.S)


def test_predict_empty_dataset(tiny_params, small_sim):
    empty = SurvivalDataset((), small_sim.n_events, small_sim.feature_names)
    curves = predict(tiny_params, empty, t_m=4)
    assert curves.S.shape == (0, 5) and curves.F.shape == (0, 2, 5)
    assert curves.to_frame().empty


def test_predict_rejects_dimension_mismatch(small_sim):
    params = ModelParams.initialize(TrainConfig(latent_dim=2).architecture(4, 2), seed=0)
    with pytest.raises(DimensionError):
        predict(params, small_sim, t_m=6)


def test_longer_horizon_extends_curves(tiny_params, small_sim):
    curves = predict(tiny_params, small_sim, t_m=12)
    assert np.all(np.diff(curves.S, axis=1) <= 0)
    assert np.all(np.diff(curves.F, axis=2) >= 0)
    assert curves.identity_gap() <= 1e-9


def test_monte_carlo_prediction(tiny_params, small_sim):
    a = predict(tiny_params, small_sim, t_m=6, n_samples=4, seed=1)
    b = predict(tiny_params, small_sim, t_m=6, n_samples=4, seed=1)
    np.testing.assert_array_equal(a.F, b.F)
    assert a.identity_gap() <= 1e-9
    mean = predict(tiny_params, small_sim, t_m=6)
    assert not np.array_equal(a.F, mean.F)


def test_reconstruction_long_table(tiny_params, small_sim):
    frame = predict_reconstruction(tiny_params, small_sim, t_m=4)
    assert list(frame.columns) == ["id", "t", "feature", "value"]
    assert len(frame) == 20 * 5 * 3
    first = frame[frame["id"] == small_sim.ids[0]]
    assert first["t"].tolist()[:3] == [0, 0, 0]
    assert first["feature"].tolist()[:3] == list(small_sim.feature_names)
