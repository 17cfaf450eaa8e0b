import dataclasses

import numpy as np
import pytest

from byindication.diagnostics import (DiagnosticError, diagnose_traces, dic, gelman_rubin,
                                      geweke_z, posterior_mean, spectral_variance_at_zero,
                                      thinned_params)
from byindication.cohort import Cohort
from byindication.model import ModelParams, PriorSpec, UnitRecord, pool_loglik
from byindication.sampler import McmcConfig, prepare_window, run_chain
from byindication.synth import demo_dataset


def ar1(n, phi, rng):
    x = np.zeros(n)
    e = rng.standard_normal(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_copies_of_one_chain(rng):
    x = rng.standard_normal(500)
    assert gelman_rubin(np.vstack([x, x, x, x])) == pytest.approx(np.sqrt(499 / 500), abs=1e-12)


def test_rhat_detects_separated_chains(rng):
    chains = rng.standard_normal((4, 400)) + np.array([[0], [0], [0], [3]])
    assert gelman_rubin(chains) > 1.3
    assert gelman_rubin(rng.standard_normal((4, 4000))) < 1.01


def test_rhat_input_checks(rng):
    with pytest.raises(DiagnosticError):
        gelman_rubin(rng.standard_normal((1, 100)))
    with pytest.raises(DiagnosticError):
        gelman_rubin(rng.standard_normal((2, 5)))
    with pytest.raises(DiagnosticError):
        gelman_rubin(np.ones((2, 50)))


def test_spectral_density_of_ar1(rng):
    # an AR(1) with coefficient phi has S(0) = 1 / (1 - phi)^2
    x = ar1(200_000, 0.6, rng)
    assert spectral_variance_at_zero(x) == pytest.approx(1 / 0.16, rel=0.05)
    assert spectral_variance_at_zero(rng.standard_normal(50_000)) == pytest.approx(1.0, rel=0.05)


def test_geweke_shift_and_null(rng):
    x = rng.standard_normal(2000)
    x[:200] += 1.0
    assert abs(geweke_z(x)) > 4
    zs = [geweke_z(ar1(2000, 0.5, rng)) for _ in range(200)]
    assert 0.7 < np.std(zs) < 1.3
    with pytest.raises(DiagnosticError):
        geweke_z(x[:50])


def test_diagnose_traces_marks_undefined_values(rng):
    rows = diagnose_traces({"a": rng.standard_normal((2, 300)), "const": np.ones((2, 300))})
    assert rows[0].rhat is not None and np.isfinite(rows[0].geweke).all()
    assert np.isnan(rows[1].rhat) and np.isnan(rows[1].geweke).all()
    single = diagnose_traces({"a": rng.standard_normal((1, 300))})
    assert single[0].rhat is None and len(single[0].geweke) == 1


def _pool():
    X = np.zeros((3, 4, 2))
    X[:, :, 0] = 1.0
    X[:, :, 1] = np.arange(4) / 4
    recs = [UnitRecord("treated", 2, 1.0, 2), UnitRecord("censored", 3, 2.0),
            UnitRecord("untreated", 3, 0.5)]
    return recs, X


def test_identical_draws_have_no_effective_parameters():
    recs, X = _pool()
    p = ModelParams(0.3, [-0.5, 0.2], 0.4, -0.02)
    res = dic([p] * 25, recs, X, 3, mc_paths=100, seed=4)
    assert res.p_d == 0.0
    assert res.dic == res.mean_deviance == res.deviance_at_mean


def test_dic_definition(rng):
    recs, X = _pool()
    draws = [ModelParams(0.3 + 0.1 * rng.standard_normal(), rng.normal([-0.5, 0.2], 0.1),
                         0.4, -0.02) for _ in range(10)]
    res = dic(draws, recs, X, 3, mc_paths=100, seed=4)
    devs = [-2 * pool_loglik(recs, X, p, 3, 100, 4).sum() for p in draws]
    d_hat = -2 * pool_loglik(recs, X, posterior_mean(draws), 3, 100, 4).sum()
    assert res.mean_deviance == pytest.approx(np.mean(devs), rel=1e-12)
    assert res.p_d == pytest.approx(np.mean(devs) - d_hat, rel=1e-9)
    assert res.dic == pytest.approx(res.mean_deviance + res.p_d)
    with pytest.raises(DiagnosticError):
        dic([], recs, X, 3)


def test_thinning_is_even():
    class Draws:
        def flat_params(self):
            return list(range(100))

    assert thinned_params(Draws(), 5) == [0, 25, 50, 74, 99]
    assert thinned_params(Draws(), 0) == list(range(100))


@pytest.mark.slow
def test_irrelevant_covariate_does_not_lower_effective_parameters():
    # regression guard on the demo cohort, not a theorem
    cohort, _, _ = demo_dataset()
    rng = np.random.default_rng(0)
    units = [dataclasses.replace(u, baseline=np.append(u.baseline, rng.standard_normal()))
             for u in cohort]
    padded = Cohort(units, list(cohort.baseline_names) + ["noise"], cohort.visit_names)
    p_d = []
    for c in (cohort, padded):
        data = prepare_window(c, 30)
        draws = run_chain(data, McmcConfig(K=30, n_chains=2, n_iters=2000, burn_in=500, seed=1),
                          PriorSpec.default(data.p))
        p_d.append(dic(thinned_params(draws, 100), data.records(), data.X, 30, 200, 0).p_d)
    assert p_d[1] >= p_d[0]
