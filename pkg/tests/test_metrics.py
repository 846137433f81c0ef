# -*- coding: utf-8 -*-
"""
评估指标: KM / AUC / Brier / Aalen-Johansen / RMFT / 报告表
"""

import numpy as np
import pytest
from lifelines import KaplanMeierFitter

from src.evaluation.metrics import (REPORT_COLUMNS, Outcomes, StepFunction, aalen_johansen, bootstrap_ci,
                                    comparable_pairs, evaluate, evaluation_times, kaplan_meier,
                                    km_censoring, mean_td_auc, rmft, td_auc, td_brier)
from src.model.decoder import HazardGrid, cif
from src.utils.errors import ContractError, DegenerateWeightError, DimensionError


def _out(times, events):
    return Outcomes.from_arrays(times, events)


# ---------- StepFunction ----------
def test_step_function_is_right_continuous():
    f = StepFunction(np.array([1.0, 3.0]), np.array([0.8, 0.5]))
    assert f(0.5) == 1.0 and f(1.0) == 0.8 and f(2.9) == 0.8 and f(3.0) == 0.5
    assert f.left_limit(1.0) == 1.0 and f.left_limit(3.0) == 0.8


def test_step_function_rejects_unsorted_breakpoints():
    with pytest.raises(ContractError):
        StepFunction(np.array([2.0, 1.0]), np.array([0.5, 0.4]))


# ---------- KM ----------
def test_censoring_km_without_censoring_is_one():
    G = km_censoring(_out([1, 2, 2, 5], [1, 1, 2, 1]))
    assert np.all(G(np.arange(0, 7)) == 1.0)


def test_censoring_km_hand_example():
    G = km_censoring(_out([1, 2, 3], [0, 1, 0]))
    assert G(1) == pytest.approx(2 / 3)
    assert G(2) == pytest.approx(2 / 3)
    assert G(3) == 0.0


def test_censoring_km_mass_point():
    G = km_censoring(_out([4, 4, 4], [0, 0, 0]))
    assert G(3.9) == 1.0 and G(4) == 0.0


def test_kaplan_meier_matches_lifelines():
    rng = np.random.default_rng(3)
    times = rng.integers(1, 15, size=80)
    events = rng.integers(0, 3, size=80)
    km = kaplan_meier(_out(times, events))

    kmf = KaplanMeierFitter().fit(times, event_observed=events > 0)
    grid = np.arange(0, 16)
    expected = kmf.survival_function_at_times(grid).to_numpy()
    np.testing.assert_allclose(km(grid), expected, atol=1e-12)


def test_km_needs_records():
    with pytest.raises(ContractError):
        km_censoring(_out([], []))


# ---------- AUC ----------
def test_auc_perfect_and_reversed():
    out = _out([1, 3, 3], [1, 0, 0])
    assert td_auc([0.9, 0.5, 0.2], out, k=1, t=2) == 1.0
    assert td_auc([0.1, 0.5, 0.2], out, k=1, t=2) == 0.0


def test_auc_ties_count_as_concordant():
    assert td_auc([0.3, 0.3, 0.3], _out([1, 3, 3], [1, 0, 0]), k=1, t=2) == 1.0


def test_auc_without_pairs_is_nan():
    assert np.isnan(td_auc([0.1, 0.2], _out([3, 4], [0, 0]), k=1, t=2))
    assert np.isnan(td_auc([0.1, 0.2], _out([1, 2], [1, 1]), k=1, t=2))


def test_auc_rejects_misaligned_predictions():
    with pytest.raises(DimensionError):
        td_auc([0.1], _out([1, 3], [1, 0]), k=1, t=2)


def test_auc_invariant_under_increasing_transform():
    rng = np.random.default_rng(0)
    times, events = rng.integers(1, 10, 40), rng.integers(0, 3, 40)
    preds = rng.uniform(size=40)
    out = _out(times, events)
    assert td_auc(preds, out, 1, 5) == td_auc(np.exp(3 * preds) + 2, out, 1, 5)


def _brute_auc(preds, times, events, k, t):
    num = den = 0.0
    for i in range(len(times)):
        if not (times[i] <= t and events[i] == k):
            continue
        for j in range(len(times)):
            if times[j] > t:
                den += 1
                num += 1.0 if preds[j] <= preds[i] else 0.0
    return num / den if den else float("nan")


def _brute_brier(preds, times, events, k, t, G):
    total = 0.0
    for i in range(len(times)):
        if times[i] <= t and events[i] == k:
            total += (1 - preds[i]) ** 2 / G.left_limit(times[i])
        elif times[i] > t:
            total += preds[i] ** 2 / G(t)
    return total / len(times)


@pytest.mark.parametrize("seed", range(50))
def test_metrics_match_direct_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 21))
    times = rng.integers(1, 8, n).astype(float)
    events = rng.integers(0, 3, n)
    events[-1] = 0
    times[-1] = 9.0  # 最晚者删失，保证 Ĝ(t) > 0
    preds = rng.choice([0.1, 0.2, 0.5, 0.7], n)  # 故意制造并列
    out = _out(times, events)
    t = float(rng.integers(1, 8))

    expected_auc = _brute_auc(preds, times, events, 1, t)
    got_auc = td_auc(preds, out, 1, t, ipcw=False)
    if np.isnan(expected_auc):
        assert np.isnan(got_auc)
    else:
        assert got_auc == pytest.approx(expected_auc, abs=1e-12)
    assert comparable_pairs(out, 1, t) == int(np.sum((times <= t) & (events == 1)) * np.sum(times > t))

    G = km_censoring(out)
    if np.all(G.left_limit(times[(times <= t) & (events == 1)]) > 0):
        assert td_brier(preds, out, 1, t) == pytest.approx(_brute_brier(preds, times, events, 1, t, G), abs=1e-12)


# ---------- Brier ----------
def test_brier_perfect_predictions():
    out = _out([1, 1, 4], [1, 1, 0])
    assert td_brier([1.0, 1.0, 0.0], out, k=1, t=2) == 0.0


def test_brier_single_control():
    assert td_brier([0.5], _out([5], [0]), k=1, t=2) == pytest.approx(0.25)


def test_brier_competing_event_counts_in_denominator():
    # 病例 F=1 无损失；竞争事件受试者不贡献误差但计入 N
    out = _out([1, 1, 4], [1, 2, 1])
    assert td_brier([1.0, 0.9, 0.4], out, k=1, t=2) == pytest.approx(0.16 / 3)


def test_brier_degenerate_censoring_weights():
    out = _out([2, 2, 3], [0, 0, 1])
    with pytest.raises(DegenerateWeightError) as info:
        td_brier([0.1, 0.2, 0.3], out, k=1, t=3, censoring=StepFunction(np.array([2.0]), np.array([0.0])))
    assert info.value.subject_ids == ["2"]


# ---------- Aalen-Johansen ----------
def test_aalen_johansen_hand_example():
    aj = aalen_johansen(_out([1, 2, 3], [1, 2, 0]), n_events=2)
    assert aj.cif[1](1) == pytest.approx(1 / 3)
    assert aj.cif[2](2) == pytest.approx(1 / 3)
    assert aj.survival(2) == pytest.approx(1 / 3)


def test_aalen_johansen_single_event_is_one_minus_km():
    rng = np.random.default_rng(2)
    out = _out(rng.integers(1, 12, 60), rng.integers(0, 2, 60))
    aj, km = aalen_johansen(out, n_events=1), kaplan_meier(out)
    bp = aj.cif[1].breakpoints
    np.testing.assert_allclose(aj.cif[1](bp), 1.0 - km(bp), atol=1e-12)


def test_aalen_johansen_identity():
    rng = np.random.default_rng(4)
    out = _out(rng.integers(1, 12, 60), rng.integers(0, 4, 60))
    aj = aalen_johansen(out, n_events=3)
    bp = aj.survival.breakpoints
    total = aj.survival(bp) + sum(aj.cif[k](bp) for k in (1, 2, 3))
    np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_aalen_johansen_without_censoring_is_empirical_cdf():
    times = np.array([1, 2, 2, 4, 7])
    aj = aalen_johansen(_out(times, np.ones(5, dtype=int)), n_events=1)
    for t in range(0, 9):
        assert aj.cif[1](t) == pytest.approx(np.mean(times <= t))


# ---------- RMFT ----------
def test_rmft_cases():
    assert rmft(np.full(6, 0.2), horizon=4, bin_width=2.0) == pytest.approx(4 * 0.2 * 2.0)
    assert rmft(np.zeros(6), horizon=5) == 0.0
    grid = HazardGrid.from_cause_hazards(np.array([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]]))
    assert float(rmft(cif(grid, 1)[0], horizon=3)) == pytest.approx(0.489, abs=1e-12)


def test_rmft_horizon_out_of_range():
    with pytest.raises(ContractError):
        rmft(np.zeros(4), horizon=4)
    with pytest.raises(ContractError):
        rmft(np.zeros(4), horizon=0)


# ---------- 汇总 ----------
def test_evaluation_times_use_observed_values():
    out = _out([1, 2, 3, 4, 5, 9, 9], [1, 1, 1, 1, 1, 2, 0])
    np.testing.assert_array_equal(evaluation_times(out, 1, (25, 50, 75)), [2, 3, 4])
    assert evaluation_times(out, 3).size == 0


def _toy_curves(n, b, t_m, value):
    F = np.zeros((n, b, t_m + 1))
    F[:, :, 1:] = value
    return F


def test_evaluate_constant_predictions():
    out = _out([1, 2, 3, 4, 6, 6], [1, 1, 1, 2, 0, 0])
    report = evaluate(_toy_curves(6, 2, 6, 0.3), out)
    assert list(report.columns) == REPORT_COLUMNS
    assert len(report) == 6
    first = report[report["event"] == 1]
    assert np.all(first["auc"] == 1.0)
    assert np.all(first["brier"] > 0)
    assert np.all(first["reason"] == "")


def test_evaluate_marks_missing_event_type():
    out = _out([1, 2, 5], [1, 1, 0])
    report = evaluate(_toy_curves(3, 2, 5, 0.2), out)
    second = report[report["event"] == 2]
    assert second["auc"].isna().all() and second["brier"].isna().all()
    assert set(second["reason"]) == {"no comparable pairs"}


def test_evaluate_marks_times_beyond_horizon():
    out = _out([1, 8, 8, 9], [1, 1, 1, 0])
    report = evaluate(_toy_curves(4, 1, 5, 0.2), out)
    assert "beyond prediction horizon" in set(report["reason"])


def test_evaluate_rejects_misaligned_curves():
    with pytest.raises(DimensionError):
        evaluate(_toy_curves(2, 1, 3, 0.1), _out([1, 2, 3], [1, 0, 0]))


def test_mean_td_auc_averages_defined_points():
    out = _out([1, 2, 3, 5, 5], [1, 1, 1, 0, 0])
    F = np.zeros((5, 1, 6))
    F[:, 0, :] = np.array([0.9, 0.8, 0.7, 0.1, 0.2])[:, None]
    assert mean_td_auc(F, out, 1) == 1.0
    assert np.isnan(mean_td_auc(F, out, 1, percentiles=()))


def test_bootstrap_interval_brackets_estimate():
    rng = np.random.default_rng(9)
    out = _out(rng.integers(1, 10, 60), rng.integers(0, 2, 60))
    preds = rng.uniform(size=60)

    def brier_at_5(p, o):
        return td_brier(p, o, 1, 5)

    estimate, lo, hi = bootstrap_ci(brier_at_5, preds, out, n_boot=50, seed=1)
    assert lo <= hi
    assert estimate == td_brier(preds, out, 1, 5)
    assert bootstrap_ci(brier_at_5, preds, out, n_boot=50, seed=1) == (estimate, lo, hi)
