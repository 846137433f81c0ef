# -*- coding: utf-8 -*-
"""
自动微分与网络层
"""

import numpy as np
import pytest

from src.nn import autodiff as ad
from src.nn.autodiff import Tape
from src.nn.gradcheck import check_arrays, check_params
from src.nn.layers import dense, gaussian_kl, gru_cell, mlp, reparam_sample, softmax
from src.nn.params import ModelParams, parameter_layout
from src.utils.errors import ContractError, DimensionError, DomainError


def _zero_gru(n_in, n_hidden):
    return {
        "gru.W_r": np.zeros((n_hidden, n_in + n_hidden)), "gru.b_r": np.zeros(n_hidden),
        "gru.W_u": np.zeros((n_hidden, n_in + n_hidden)), "gru.b_u": np.zeros(n_hidden),
        "gru.W_n": np.zeros((n_hidden, n_in)), "gru.U_n": np.zeros((n_hidden, n_hidden)),
        "gru.b_n": np.zeros(n_hidden),
    }


# ---------- tape ----------
def test_quadratic_gradient():
    tape = Tape()
    p = tape.watch(np.array([1.0, -2.0, 3.0]), "p")
    grads = tape.backward(ad.tsum(ad.square(p)))
    np.testing.assert_array_equal(grads["p"], [2.0, -4.0, 6.0])


def test_disconnected_leaf_gets_zero_gradient():
    tape = Tape()
    p = tape.watch(np.array([1.0, 2.0]), "p")
    tape.watch(np.ones((2, 2)), "unused")
    grads = tape.backward(ad.tsum(p * 3.0))
    np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))


def test_shared_subexpression_accumulates():
    tape = Tape()
    x = tape.watch(np.array(2.0), "x")
    y = x * x
    grads = tape.backward(y + y)
    assert grads["x"] == pytest.approx(8.0)


def test_broadcast_gradient_is_reduced():
    tape = Tape()
    bias = tape.watch(np.array([1.0, 2.0]), "b")
    out = ad.tsum(np.ones((3, 2)) + bias)
    np.testing.assert_array_equal(tape.backward(out)["b"], [3.0, 3.0])


def test_non_scalar_loss_rejected():
    tape = Tape()
    x = tape.watch(np.ones(2), "x")
    with pytest.raises(ContractError):
        tape.backward(x * 2.0)


def test_mixing_tapes_rejected():
    a = Tape().watch(np.ones(2), "a")
    b = Tape().watch(np.ones(2), "b")
    with pytest.raises(ContractError):
        _ = a + b


def test_ops_match_finite_differences():
    rng = np.random.default_rng(0)
    arrays = {"a": rng.normal(size=(3, 4)), "w": rng.normal(size=(2, 4)), "v": rng.uniform(0.5, 2, size=(3, 2))}

    def loss(t):
        h = ad.linear(ad.tanh(t["a"]), t["w"])                 # (3, 2)
        h = ad.softplus(h) * ad.sigmoid(t["v"]) + ad.exp(h * 0.1)
        h = h / t["v"] - ad.log(t["v"])
        s = ad.softmax(ad.concat([h, ad.cumsum(h, axis=0)], axis=1), axis=1)
        st = ad.stack([s[:, 0], s[:, 3]], axis=0)
        return ad.mean(ad.square(st)) + ad.tsum(ad.reshape(h, (6,))[::2])

    report = check_arrays(loss, arrays)
    assert report.passed(1e-5), report


# ---------- layers ----------
def test_dense_identity():
    x = np.array([1.0, -2.0, 3.0])
    y = dense(x, np.eye(3), np.zeros(3), "linear")
    np.testing.assert_array_equal(y.value, x)


def test_dense_zero_input_tanh():
    bias = np.array([0.3, -0.7])
    y = dense(np.zeros(3), np.ones((2, 3)), bias, "tanh")
    np.testing.assert_allclose(y.value, np.tanh(bias))


def test_dense_relu_hand_example():
    y = dense(np.array([1.0, 1.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2), "relu")
    np.testing.assert_array_equal(y.value, [3.0, 7.0])


def test_dense_shape_and_activation_errors():
    with pytest.raises(DimensionError):
        dense(np.ones(3), np.ones((2, 4)), np.zeros(2))
    with pytest.raises(DomainError):
        dense(np.ones(2), np.ones((2, 2)), np.zeros(2), "gelu")


def test_gru_zero_weights_fixed_point():
    h = gru_cell(np.zeros(2), np.zeros(3), _zero_gru(2, 3))
    np.testing.assert_array_equal(h.value, np.zeros(3))


def test_gru_zero_weights_halves_state():
    c = np.array([0.4, -1.0, 2.0])
    h = gru_cell(np.zeros(2), c, _zero_gru(2, 3))
    np.testing.assert_allclose(h.value, 0.5 * c)


def test_gru_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    theta = {k: rng.normal(scale=0.7, size=v.shape) for k, v in _zero_gru(3, 4).items()}
    x, h = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))

    def loss(t):
        return ad.tsum(ad.square(gru_cell(x, h, t)))

    assert check_arrays(loss, theta).passed(1e-4)


def test_softmax_cases():
    np.testing.assert_allclose(softmax(np.zeros(3)).value, [1 / 3] * 3)
    np.testing.assert_allclose(softmax(np.array([np.log(2.0), 0.0])).value, [2 / 3, 1 / 3])
    logits = np.array([0.2, -1.0, 3.0])
    np.testing.assert_allclose(softmax(logits + 50.0).value, softmax(logits).value, atol=1e-12)


def test_softmax_large_logits_stay_finite():
    p = softmax(np.array([1000.0, 0.0])).value
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


def test_gaussian_kl_closed_forms():
    assert float(gaussian_kl(np.zeros(3), np.ones(3)).value) == pytest.approx(0.0)
    assert float(gaussian_kl(np.array([1.0]), np.array([1.0])).value) == pytest.approx(0.5)
    expected = 0.5 * (4.0 - 1.0 - 2.0 * np.log(2.0))
    assert float(gaussian_kl(np.array([0.0]), np.array([2.0])).value) == pytest.approx(expected)


def test_gaussian_kl_rejects_nonpositive_sigma():
    with pytest.raises(DomainError):
        gaussian_kl(np.zeros(2), np.array([1.0, 0.0]))


def test_reparam_sample():
    mu, sigma = np.array([0.5, -1.0]), np.array([2.0, 0.0])
    np.testing.assert_array_equal(reparam_sample(mu, sigma, np.zeros(2)).value, mu)
    np.testing.assert_array_equal(reparam_sample(mu, np.zeros(2), np.ones(2)).value, mu)

    noise = np.array([0.3, -0.8])
    tape = Tape()
    m, s = tape.watch(mu, "mu"), tape.watch(np.array([2.0, 1.5]), "sigma")
    grads = tape.backward(ad.tsum(reparam_sample(m, s, noise)))
    np.testing.assert_array_equal(grads["mu"], [1.0, 1.0])
    np.testing.assert_array_equal(grads["sigma"], noise)


def test_mlp_stacks_layers_in_order():
    weights = {"f.W0": np.eye(2) * 2, "f.b0": np.zeros(2), "f.W1": np.ones((1, 2)), "f.b1": np.array([1.0])}
    out = mlp(np.array([[1.0, -1.0]]), weights, "f", hidden="relu", output="linear")
    assert out.value.tolist() == [[3.0]]


# ---------- params ----------
def test_params_layout_and_initialization(tiny_arch):
    params = ModelParams.initialize(tiny_arch, seed=0)
    assert params.names == [name for name, _, _ in parameter_layout(tiny_arch)]
    assert params.init_of("gru.b_u") == "ones"
    assert np.all(params["gru.b_u"] == 1.0)
    assert params.owner("cause2.W0") == "hazard"
    assert set(params.group("reconstruction")) == {"recon.W0", "recon.b0", "recon.W1", "recon.b1"}
    assert ModelParams.initialize(tiny_arch, seed=0).equals(params)
    with pytest.raises(ValueError):
        params["head.W"][0, 0] = 1.0


def test_params_reject_wrong_shape(tiny_params):
    values = dict(tiny_params.items())
    values["head.b"] = np.zeros(7)
    with pytest.raises(DimensionError):
        ModelParams(tiny_params.arch, values, {})


def test_check_params_on_quadratic(tiny_params):
    def loss(w):
        return ad.tsum(ad.square(w["head.W"])) + ad.tsum(w["head.b"] * 3.0)

    report = check_params(loss, tiny_params, names=["head.W", "head.b"])
    assert report.passed(1e-6)
    assert set(report.per_tensor) == {"head.W", "head.b"}
