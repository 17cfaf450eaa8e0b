import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from byindication.cohort import CENSORED
from byindication.model import (ModelParams, PriorSpec, UnitRecord, _unit_noise,
                                assignment_prob, hitting_pmf_from_probs, hitting_pmf_given_path,
                                hitting_time, indication_prob, pool_loglik, prob_not_treated,
                                unit_log_terms, unit_log_terms_draws, unit_loglik)


def enumerate_first_hit(q):
    """P(first hit = t) by summing over every binary sequence."""
    K = len(q)
    out = np.zeros(K + 1)
    for psi in itertools.product([0, 1], repeat=K):
        p = np.prod([qi if s else 1 - qi for qi, s in zip(q, psi)])
        t = hitting_time(psi)
        out[K if t == CENSORED else t - 1] += p
    return out


@pytest.mark.parametrize("K", [1, 2, 5, 8])
def test_hitting_pmf_matches_enumeration(K, rng):
    q = rng.uniform(0.01, 0.9, K)
    np.testing.assert_allclose(hitting_pmf_from_probs(q), enumerate_first_hit(q), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40))
def test_hitting_pmf_normalized(q):
    pmf = hitting_pmf_from_probs(q)
    assert np.all(pmf >= 0)
    assert abs(pmf.sum() - 1.0) < 1e-12


def test_hitting_time_first_one():
    assert hitting_time([0, 0, 1, 1]) == 3
    assert hitting_time([1]) == 1
    assert hitting_time([0, 0, 0]) == CENSORED


def test_indication_prob_symmetric_point():
    assert indication_prob(0.0, np.array([1.0]), np.array([0.0])) == pytest.approx(0.5)
    assert indication_prob(1.0, np.array([1.0]), np.array([-1.0])) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        indication_prob(0.0, np.array([1.0, 2.0]), np.array([0.0]))


def test_assignment_prob_rejects_positive_slope():
    assert assignment_prob(3, 0.0, 0.0, 0.0) == pytest.approx(0.5)
    assert assignment_prob(1, 10.0, 1.0, -0.1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        assignment_prob(1, 1.0, 0.0, 0.1)


def test_model_params_domain():
    with pytest.raises(ValueError):
        ModelParams(1.0, [0.0], 0.0, -0.1)
    with pytest.raises(ValueError):
        ModelParams(0.2, [0.0], 0.0, 0.1)


def test_prior_requires_positive_definite_cov():
    with pytest.raises(ValueError):
        PriorSpec(beta_mean=[0, 0], beta_cov=[[1, 2], [2, 1]])
    assert PriorSpec.default(3).beta_cov[2, 2] == 9.0


def test_prob_not_treated_matches_enumeration(rng):
    K = 4
    q = rng.uniform(0.05, 0.6, K)
    pi = 0.7
    brute = 0.0
    for psi in itertools.product([0, 1], repeat=K):
        p = np.prod([qi if s else 1 - qi for qi, s in zip(q, psi)])
        brute += p * ((1 - pi) if any(psi) else 1.0)
    assert prob_not_treated(hitting_pmf_from_probs(q), pi) == pytest.approx(brute, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.0, 1.0))
def test_censoring_term_identity(q, pi):
    # sum_t P(T=t)(1 - pi) + P(no hit) = 1 - pi (1 - P(no hit))
    pmf = hitting_pmf_from_probs(q)
    lhs = prob_not_treated(pmf, pi)
    assert abs(lhs - (1 - pi * (1 - pmf[-1]))) < 1e-12


def test_pmf_given_path_uses_days_one_to_k():
    theta = np.array([100.0, -100.0, 100.0])
    X = np.zeros((3, 1))
    pmf = hitting_pmf_given_path(theta, X, np.zeros(1), 2)
    np.testing.assert_allclose(pmf, [0.0, 1.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        hitting_pmf_given_path(theta, X, np.zeros(1), 3)


# -- Monte Carlo likelihood ------------------------------------------------------

def _zero_design(K, p=1):
    return np.zeros((K + 1, p))


def test_k1_closed_forms():
    # beta = 0, delta = 0: P(hit on day 1) = 1/2 by symmetry and pi = 1/2
    params = ModelParams(0.4, [0.0], 0.0, 0.0)
    X = _zero_design(1)
    treated = unit_loglik(UnitRecord("treated", 1, 0.0, 1), X, params, 1, 10 ** 6, seed=1)
    untreated = unit_loglik(UnitRecord("untreated", 1, 0.0), X, params, 1, 10 ** 6, seed=2)
    assert treated == pytest.approx(math.log(0.25), abs=1e-3)
    assert untreated == pytest.approx(math.log(0.75), abs=1e-3)


def test_censored_unit_integrates_the_state():
    # theta_1 ~ N(0, 1) when rho = 0, so P(hit) = Phi(eta / sqrt(2))
    params = ModelParams(0.0, [1.0], 0.0, -0.1)
    X = np.ones((2, 1))
    ll, se = unit_loglik(UnitRecord("censored", 1, 0.0), X, params, 1, 400_000, seed=3,
                         return_se=True)
    exact = math.log(1 - stats.norm.cdf(1 / math.sqrt(2)))
    assert stats.norm.cdf(1 / math.sqrt(2)) == pytest.approx(0.7602, abs=1e-4)
    assert abs(ll - exact) < 4 * se


@pytest.mark.parametrize("kind,last,t_obs", [("treated", 3, 3), ("censored", 4, -1),
                                             ("untreated", 2, -1), ("treated", 1, 1)])
def test_compiled_terms_match_reference(kind, last, t_obs, rng):
    K = 4
    X = rng.standard_normal((K + 1, 2))
    draws = [ModelParams(r, rng.standard_normal(2), d0, -abs(d1))
             for r, d0, d1 in rng.uniform(-0.9, 0.9, (3, 3))]
    rec = UnitRecord(kind, last, 2.5, t_obs)
    noise = _unit_noise(7, 0, 500, K + 1)
    fast = unit_log_terms_draws(rec, X, draws, noise)
    for d, p in enumerate(draws):
        np.testing.assert_allclose(fast[d], unit_log_terms(rec, X, p, noise), rtol=1e-12,
                                   atol=1e-12)


def test_day_outside_window_rejected():
    p = [ModelParams(0.0, [0.0], 0.0, 0.0)]
    with pytest.raises(ValueError):
        unit_log_terms_draws(UnitRecord("untreated", 3, 0.0), np.zeros((3, 1)), p, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        unit_log_terms_draws(UnitRecord("treated", 0, 0.0, 0), np.zeros((3, 1)), p, np.zeros((5, 3)))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        unit_log_terms_draws(UnitRecord("odd", 1, 0.0), np.zeros((2, 1)),
                             [ModelParams(0.0, [0.0], 0.0, 0.0)], np.zeros((3, 2)))


def test_pool_loglik_shares_random_numbers():
    X = np.zeros((2, 3, 1))
    recs = [UnitRecord("treated", 2, 0.0, 2), UnitRecord("untreated", 2, 1.0)]
    p = ModelParams(0.3, [0.1], 0.2, -0.05)
    a = pool_loglik(recs, X, p, 2, mc_paths=50, seed=9)
    b = pool_loglik(recs, X, p, 2, mc_paths=50, seed=9)
    c = pool_loglik(recs, X, p, 2, mc_paths=50, seed=10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    single = unit_loglik(recs[1], X[1], p, 2, mc_paths=50, seed=9, index=1)
    assert a[1] == pytest.approx(single, rel=1e-12)


def test_extreme_predictor_stays_finite():
    # the probit argument is clamped, so a near-impossible event has a tiny finite log
    params = ModelParams(0.0, [1.0], 0.0, 0.0)
    X = np.full((2, 1), -1e6)
    ll = unit_loglik(UnitRecord("treated", 1, 0.0, 1), X, params, 1, 10)
    assert np.isfinite(ll) and ll < -600


def test_mc_paths_must_be_positive():
    with pytest.raises(ValueError):
        unit_loglik(UnitRecord("censored", 1, 0.0), np.zeros((2, 1)),
                    ModelParams(0.0, [0.0], 0.0, 0.0), 1, 0)
