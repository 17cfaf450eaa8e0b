"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line before asserting.
Criterion 4 takes over an hour and runs only with ``BYINDICATION_SLOW=1``.
"""
import io
import math
import os
import time

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, special, stats

from byindication import cli
from byindication.cohort import CENSORED
from byindication.diagnostics import dic, geweke_z, gelman_rubin
from byindication.effects import estimate_ate, format_percent, true_control_counts
from byindication.model import (ModelParams, PriorSpec, UnitRecord, hitting_pmf_from_probs,
                                prob_not_treated, unit_loglik)
from byindication.rsm import format_rsm_row
from byindication.sampler import (TREATED, UNTREATED, McmcConfig, WindowData, ffbs_theta,
                                  prepare_window, run_chain, sample_utilities)
from byindication.synth import DEMO_SEED, GenerativeParams, generate_cohort
from helpers import dense_posterior, fake_draws, make_cohort, make_unit, moment_z_scores


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


# -- 1. likelihood against brute-force simulation -----------------------------------

def simulated_event_prob(record, X, params, n, rng, chunk=250_000):
    """Frequency of the unit's observed event when simulating the full generative model."""
    last = record.t_obs if record.kind == "treated" else record.last_day
    eta = X[1:last + 1] @ params.beta
    pi = special.expit(params.delta0 + params.delta1 * record.D)
    hits = 0
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        theta = rng.standard_normal(m)
        psi = np.zeros((m, last), dtype=bool)
        for t in range(last):
            theta = params.rho * theta + rng.standard_normal(m)
            psi[:, t] = theta + eta[t] + rng.standard_normal(m) > 0
        z = rng.random(m) < pi
        hit_any = psi.any(axis=1)
        if record.kind == "treated":
            event = ~psi[:, :-1].any(axis=1) & psi[:, -1] & z
        elif record.kind == "censored":
            event = ~hit_any
        else:
            event = ~(hit_any & z)
        hits += int(event.sum())
    p = hits / n
    return p, math.sqrt((1 - p) / (n * p))


def test_criterion_1_likelihood_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 10 ** 6
    worst = 0.0
    for setting in range(20):
        K = int(rng.integers(1, 5))
        X = np.column_stack([np.ones(K + 1), rng.standard_normal(K + 1)])
        params = ModelParams(rng.uniform(-0.8, 0.8), rng.normal([-0.3, 0.0], 0.4),
                             rng.uniform(-1, 1.5), -rng.uniform(0, 0.1))
        kind = ("treated", "censored", "untreated")[setting % 3]
        t_obs = int(rng.integers(1, K + 1)) if kind == "treated" else CENSORED
        last = t_obs if kind == "treated" else int(rng.integers(1, K + 1))
        rec = UnitRecord(kind, last, rng.uniform(0, 30), t_obs)
        ll, se = unit_loglik(rec, X, params, K, n, seed=setting, return_se=True)
        p, rel_se = simulated_event_prob(rec, X, params, n, np.random.default_rng([77, setting]))
        worst = max(worst, abs(ll - math.log(p)) / math.hypot(se, rel_se))
    zero = ModelParams(0.4, [0.0], 0.0, 0.0)
    X1 = np.zeros((2, 1))
    a = unit_loglik(UnitRecord("treated", 1, 0.0, 1), X1, zero, 1, n, seed=1)
    b = unit_loglik(UnitRecord("untreated", 1, 0.0), X1, zero, 1, n, seed=2)
    analytic = max(abs(a - math.log(0.25)), abs(b - math.log(0.75)))
    elapsed = time.perf_counter() - start
    verdict(1, worst < 3 and analytic < 1e-3 and elapsed < 120,
            f"max |z| {worst:.2f} over 20 settings, analytic error {analytic:.1e}, "
            f"{elapsed:.0f}s")


# -- 2. FFBS against joint Gaussian conditioning -------------------------------------

def test_criterion_2_ffbs_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for K, L, rho in [(1, 1, 0.6), (2, 2, -0.4), (3, 3, 0.9), (3, 2, 0.3)]:
        y = rng.standard_normal(L) * 1.5
        X = np.column_stack([np.ones(K + 1), rng.standard_normal(K + 1)])
        beta = np.array([0.4, -0.7])
        mean, cov = dense_posterior(y - X[1:L + 1] @ beta, rho, K)
        draws = np.array([ffbs_theta(y, X, beta, rho, K, rng) for _ in range(10 ** 5)])
        z_mean, z_var = moment_z_scores(draws, mean, cov)
        worst = max(worst, np.abs(z_mean).max(), np.abs(z_var).max())
    elapsed = time.perf_counter() - start
    verdict(2, worst < 3 and elapsed < 60, f"max |z| {worst:.2f}, {elapsed:.0f}s")


# -- 3. whole sampler against grid quadrature at one unit ----------------------------

def delta0_grid_cdf(prior, D, treated):
    """Marginal posterior CDF of delta0 for one unit with K = 1.

    A treated unit contributes pi.  An untreated unit contributes
    1 - P(T = 1) pi, and P(T = 1) averages to 1/2 under the symmetric priors.
    """
    d0 = np.linspace(-12, 12, 3001)
    u = np.linspace(1e-6, 0.6, 3001)
    dd, uu = np.meshgrid(d0, u, indexing="ij")
    pi = special.expit(dd - uu * D)
    like = pi if treated else 1 - 0.5 * pi
    dens = (stats.norm.pdf(dd, prior.delta0_mean, prior.delta0_sd)
            * stats.gamma.pdf(uu, prior.delta1_gamma_shape, scale=1 / prior.delta1_gamma_rate)
            * like)
    marg = integrate.trapezoid(dens, u, axis=1)
    cdf = integrate.cumulative_trapezoid(marg, d0, initial=0.0)
    return d0, cdf / cdf[-1]


def test_criterion_3_single_unit_posterior(verdict):
    start = time.perf_counter()
    prior = PriorSpec.default(1)
    D = 20.0
    bins = 10
    tv = {}
    for label, kind in (("treated", TREATED), ("untreated", UNTREATED)):
        data = WindowData(ids=["1"], X=np.ones((1, 2, 1)), kind=[kind],
                          t_obs=[1 if kind == TREATED else CENSORED], last=[1], D=[D], K=1)
        config = McmcConfig(K=1, n_chains=4, n_iters=51_000, burn_in=1_000, thin=2, seed=9)
        draws = run_chain(data, config, prior).delta0.ravel()
        assert draws.size == 10 ** 5
        grid, cdf = delta0_grid_cdf(prior, D, kind == TREATED)
        edges = np.interp(np.arange(1, bins) / bins, cdf, grid)
        counts = np.bincount(np.searchsorted(edges, draws), minlength=bins)
        tv[label] = 0.5 * np.abs(counts / draws.size - 1 / bins).sum()
    elapsed = time.perf_counter() - start
    verdict(3, max(tv.values()) < 0.02,
            ", ".join(f"TV {k} {v:.4f}" for k, v in tv.items()) + f", {elapsed:.0f}s")


# -- 4. calibration over synthetic cohorts ------------------------------------------

@pytest.mark.slow
def test_criterion_4_calibration(verdict, capsys):
    if os.environ.get("BYINDICATION_SLOW") != "1":
        with capsys.disabled():
            print("\ncriterion 4: SKIPPED  50 full fits take over an hour; "
                  "set BYINDICATION_SLOW=1")
        pytest.skip("set BYINDICATION_SLOW=1 to run the calibration study")
    from calibration import coverage, replicate
    start = time.perf_counter()
    results = [replicate(rep) for rep in range(50)]
    cover = coverage(results)
    elapsed = time.perf_counter() - start
    verdict(4, min(cover.values()) >= 0.9,
            " ".join(f"{k} {v:.2f}" for k, v in cover.items()) + f", {elapsed / 60:.0f} min")


# -- 5. invariants ------------------------------------------------------------------

@pytest.fixture(scope="module")
def short_fit():
    params = GenerativeParams(rho=0.3, beta=(-2.5, 0.5, 0.0, 0.4, 0.0), delta0=1.0,
                              delta1=-0.02)
    cohort, _ = generate_cohort(150, 30, params, seed=5)
    data = prepare_window(cohort, 30)
    draws = run_chain(data, McmcConfig(K=30, n_chains=2, n_iters=300, burn_in=100, seed=1),
                      PriorSpec.default(data.p))
    return cohort, draws


def test_criterion_5_invariants(verdict, short_fit):
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    failures = []

    pmf_err = ident_err = 0.0
    for _ in range(500):
        q = rng.random(int(rng.integers(1, 60))) ** rng.uniform(0.2, 5)
        pi = rng.random()
        pmf = hitting_pmf_from_probs(q)
        pmf_err = max(pmf_err, abs(pmf.sum() - 1), -pmf.min())
        ident_err = max(ident_err, abs(prob_not_treated(pmf, pi) - (1 - pi * (1 - pmf[-1]))))
    if pmf_err > 1e-12 or ident_err > 1e-12:
        failures.append(f"pmf {pmf_err:.1e} identity {ident_err:.1e}")

    cohort, draws = short_fit
    counts = np.array([true_control_counts(draws, K) for K in (5, 10, 20, 30)])
    if np.any(np.diff(counts, axis=0) < 0):
        failures.append("control counts shrink with the window")
    if not (np.all(np.abs(draws.rho) < 1) and np.all(draws.delta1 <= 0)):
        failures.append("stored draw outside the parameter domain")
    est = estimate_ate(draws, cohort, 30, 365)
    used = np.isfinite(est.tau_draws)
    if not np.array_equal(est.tau_draws[used], est.surv_treated - est.control_rate_draws[used]):
        failures.append("per-draw effect is not the rate difference")

    K = 8
    for _ in range(300):
        theta = rng.standard_normal(K + 1)
        X = rng.standard_normal((K + 1, 2))
        T = int(rng.integers(1, K + 1)) if rng.random() < 0.7 else CENSORED
        W = sample_utilities(theta, X, rng.standard_normal(2), T, K, rng)
        ok = np.all(W[:-1] < 0) and W[-1] > 0 if T != CENSORED else np.all(W < 0)
        if not ok:
            failures.append(f"utility sign broken for T={T}")
            break
    elapsed = time.perf_counter() - start
    verdict(5, not failures and elapsed < 60,
            "; ".join(failures) or f"all invariants hold, {elapsed:.0f}s")


# -- 6. diagnostics -----------------------------------------------------------------

def test_criterion_6_diagnostics(verdict):
    rng = np.random.default_rng(606)
    x = rng.standard_normal(500)
    rhat = gelman_rubin(np.vstack([x] * 4))
    shifted = rng.standard_normal(2000)
    shifted[:200] += 1.0
    z = geweke_z(shifted)
    X = np.zeros((2, 3, 2))
    X[:, :, 0] = 1.0
    recs = [UnitRecord("treated", 2, 1.0, 2), UnitRecord("untreated", 2, 0.5)]
    p_d = dic([ModelParams(0.3, [-0.5, 0.2], 0.4, -0.02)] * 20, recs, X, 2, 100, 1).p_d
    ok = abs(rhat - math.sqrt(499 / 500)) < 1e-12 and abs(z) > 4 and p_d == 0.0
    verdict(6, ok, f"R-hat {rhat:.6f}, Geweke |z| {abs(z):.1f}, p_D {p_d}")


# -- 7. arithmetic anchors -----------------------------------------------------------

def anchor_effect(surv_treated, surv_control):
    n = 1000
    units = [make_unit(i + 1, True, 3, death=None if i < surv_treated * n else 100,
                       followup=1000 if i < surv_treated * n else 100) for i in range(n)]
    units += [make_unit(n + i + 1, death=None if i < surv_control * n else 100,
                        followup=1000 if i < surv_control * n else 100) for i in range(n)]
    draws = fake_draws(14, np.full((2, n), 5), [str(n + i + 1) for i in range(n)])
    return format_percent(estimate_ate(draws, make_cohort(units), 14, 365).tau)


def test_criterion_7_arithmetic_anchors(verdict):
    got = [anchor_effect(0.716, 0.820), anchor_effect(0.725, 0.845)]
    row = format_rsm_row(14, 0.715, 0.715)
    ok = got == ["-10.4%", "-12.0%"] and row == ["14 Days", "71.5%", "71.5%", "0.0%"]
    verdict(7, ok, f"effects {got}, RSM row {row}")


# -- 8. end to end on the demo cohort --------------------------------------------------

SMOKE = """
units = data/units.csv
visits = data/visits.csv
out_dir = out
chains = 2
iters = 400
burn_in = 100
mc_paths = 50
dic_draws = 20
spline_lambda = 0
"""


def pipeline_run(root):
    cfg = root / "run.cfg"
    cfg.write_text(SMOKE)
    codes = []
    for step in (["simulate", "--seed", DEMO_SEED], ["validate"], ["match"],
                 ["fit", "--allow-unconverged"], ["report"]):
        argv = [step[0], "--config", cfg, *step[1:]]
        codes.append(cli.run([str(a) for a in argv], io.StringIO(), io.StringIO()))
    return codes


def test_criterion_8_end_to_end(verdict, tmp_path):
    start = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes = pipeline_run(a) + pipeline_run(b)
    files = ["out/effects.csv", "out/curve.csv", "out/matches.csv", "out/60/draws.csv",
             "out/365/tmis.csv"]
    same = all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
    eff = pd.read_csv(a / "out/effects.csv")
    curve = pd.read_csv(a / "out/curve.csv").set_index("day")["tau_smooth"]
    knots = eff.dropna(subset=["tau"])
    gap = float(np.max(np.abs(curve.loc[knots["window"]].to_numpy() - knots["tau"].to_numpy())))
    elapsed = time.perf_counter() - start
    ok = codes == [0] * 10 and same and len(eff) == 8 and len(knots) >= 2 and gap < 1e-9
    verdict(8, ok and elapsed < 600,
            f"exit codes {set(codes)}, identical reruns {same}, {len(eff)} rows, "
            f"knot gap {gap:.1e}, {elapsed:.0f}s for two runs")
