import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byindication.cohort import CENSORED
from byindication.effects import (classify_controls, estimate_ate, estimate_cate, estimate_rmst,
                                  format_percent, survival_days, survival_outcome,
                                  true_control_counts)
from helpers import fake_draws, make_cohort, make_unit


def test_survival_outcome_cases():
    assert survival_outcome(make_unit(1, death=400, followup=400), 10, 365) == 1
    assert survival_outcome(make_unit(1, death=375, followup=375), 10, 365) == 0
    assert survival_outcome(make_unit(1, followup=375), 10, 365) == 1
    assert survival_outcome(make_unit(1, followup=374), 10, 365) is None
    with pytest.raises(ValueError):
        survival_outcome(make_unit(1, followup=5), 10, 365)
    assert survival_days(make_unit(1, death=50, followup=50), 10, 365) == 40
    assert survival_days(make_unit(1, followup=500), 10, 365) == 365
    assert np.isnan(survival_days(make_unit(1, followup=20), 10, 365))


def test_classify_controls():
    true, inel = classify_controls([1, 5, 6, CENSORED], 5)
    np.testing.assert_array_equal(true, [True, True, False, False])
    np.testing.assert_array_equal(inel, ~true)


def anchor_cohort(n_treated, alive_treated, n_control, alive_control, K=14):
    units = []
    for i in range(n_treated):
        death = None if i < alive_treated else 100
        units.append(make_unit(len(units) + 1, True, 3, death=death,
                               followup=1000 if death is None else death))
    ids = []
    for i in range(n_control):
        death = None if i < alive_control else 100
        units.append(make_unit(len(units) + 1, False, None, death=death,
                               followup=1000 if death is None else death))
        ids.append(units[-1].unit_id)
    return make_cohort(units), ids


@pytest.mark.parametrize("rates,expected", [((716, 820), "-10.4%"), ((725, 845), "-12.0%")])
def test_rate_arithmetic_anchor(rates, expected):
    cohort, ids = anchor_cohort(1000, rates[0], 1000, rates[1])
    draws = fake_draws(14, np.full((3, 1000), 5), ids)
    est = estimate_ate(draws, cohort, 14, 365)
    assert format_percent(est.surv_treated) == f"{rates[0] / 10:.1f}%"
    assert format_percent(est.surv_control) == f"{rates[1] / 10:.1f}%"
    assert format_percent(est.tau) == expected
    np.testing.assert_allclose(est.tau_draws, est.surv_treated - est.control_rate_draws)


def test_per_draw_effect_uses_true_controls_only():
    # controls: 4 alive forever, 5 dies 50 days after day 2, 6 only followed to day 100
    units = [make_unit(1, True, 2, followup=1000), make_unit(2, True, 4, death=30, followup=30),
             make_unit(3, True, 9, followup=1000),
             make_unit(4, followup=1000), make_unit(5, death=52, followup=52),
             make_unit(6, followup=100)]
    cohort = make_cohort(units)
    draws = fake_draws(5, [[1, 2, 3], [CENSORED, 2, 4], [7, CENSORED, CENSORED]], ["4", "5", "6"])
    est = estimate_ate(draws, cohort, 5, 365)
    assert est.n1 == 2 and est.surv_treated == 0.5
    # draw 0: unit 6 is indeterminate, so rates come from units 4 and 5
    np.testing.assert_allclose(est.control_rate_draws[:2], [0.5, 0.0])
    assert np.isnan(est.control_rate_draws[2])
    assert est.n_draws_used == 2 and est.n_draws_skipped == 1
    np.testing.assert_allclose(est.tau_draws, [0.0, 0.5])
    np.testing.assert_array_equal(est.n0_draws, [3, 2, 0])
    cate = estimate_cate(draws, cohort, (3, 5))
    assert cate.n1 == 1 and cate.surv_treated == 0.0
    np.testing.assert_array_equal(cate.n0_draws, [1, 1, 0])


def test_day_zero_counts_as_day_one():
    cohort = make_cohort([make_unit(1, True, 0, followup=1000), make_unit(2, followup=1000)])
    est = estimate_ate(fake_draws(3, [[1]], ["2"]), cohort, 3)
    assert est.n1 == 1 and est.tau == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_control_counts_grow_with_the_window(seed):
    rng = np.random.default_rng(seed)
    T = rng.integers(-1, 40, size=(2, 30, 12))
    T[T == 0] = CENSORED
    draws = fake_draws(40, T, [str(i) for i in range(12)])
    counts = np.array([true_control_counts(draws, K) for K in (5, 10, 20, 40)])
    assert np.all(np.diff(counts, axis=0) >= 0)


def test_window_beyond_fit_rejected():
    cohort = make_cohort([make_unit(1, True, 2), make_unit(2)])
    with pytest.raises(ValueError):
        estimate_ate(fake_draws(5, [[1]], ["2"]), cohort, 6)
    with pytest.raises(ValueError):
        estimate_cate(fake_draws(5, [[1]], ["2"]), cohort, (4, 2))


def test_restricted_mean_survival():
    units = [make_unit(1, True, 1, death=101, followup=101), make_unit(2, True, 1, followup=900),
             make_unit(3, death=201, followup=201), make_unit(4, followup=900)]
    est = estimate_rmst(fake_draws(3, [[1, 1], [1, CENSORED]], ["3", "4"]), make_cohort(units), 3)
    assert est.surv_treated == pytest.approx((100 + 365) / 2)
    np.testing.assert_allclose(est.control_rate_draws, [(200 + 365) / 2, 200])


def test_percent_format():
    assert format_percent(0.715) == "71.5%"
    assert format_percent(-0.0001) == "0.0%"
    assert format_percent(-0.104) == "-10.4%"
    assert format_percent(float("nan")) == "NA"
