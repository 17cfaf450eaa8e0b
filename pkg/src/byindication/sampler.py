"""Gibbs sampler for the indication-time model.

Each sweep updates, in order, the probit utilities ``W``, the latent
health paths ``theta`` (forward filtering, backward sampling), ``beta``,
``rho``, the missing indication times of untreated units and the
assignment coefficients ``(delta0, delta1)``.  The path update opens with a
Metropolis move on ``rho`` that integrates the paths out (Kalman filter);
the conjugate ``rho`` update later in the sweep is kept.

The trailing part of a path after its last utility carries no
observation; it is integrated out of the ``theta`` and ``rho`` updates and
redrawn from the AR(1) prior immediately before the indication times are
imputed.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import _kernels as kern
from .cohort import CENSORED, Cohort, Standardization, build_design, cohort_standardizations
from .model import ModelParams, PriorSpec


TREATED, KNOWN_CENSORED, UNTREATED = 0, 1, 2


class SamplerError(RuntimeError):
    """Numerical failure inside a chain."""

    def __init__(self, message, chain=None, iteration=None):
        self.chain = chain
        self.iteration = iteration
        if chain is not None:
            message = f"chain {chain}, iteration {iteration}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class McmcConfig:
    K: int
    n_chains: int = 4
    n_iters: int = 20_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    step_delta0: float = 0.3
    step_delta1: float = 0.5
    step_rho: float = 0.05
    adapt: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if not 0 <= self.burn_in < self.n_iters:
            raise ValueError("burn_in must be smaller than n_iters")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    @property
    def draws_per_chain(self) -> int:
        return len(range(self.burn_in, self.n_iters, self.thin))


@dataclass
class WindowData:
    """A pool of units prepared for fitting one study window."""

    ids: list[str]
    X: np.ndarray
    kind: np.ndarray
    t_obs: np.ndarray
    last: np.ndarray
    D: np.ndarray
    K: int
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.kind = np.asarray(self.kind, dtype=np.int64)
        self.t_obs = np.asarray(self.t_obs, dtype=np.int64)
        self.last = np.asarray(self.last, dtype=np.int64)
        self.D = np.asarray(self.D, dtype=float)
        if self.X.shape[1] != self.K + 1:
            raise ValueError("design must cover days 0..K")
        if np.any(self.last > self.K) or np.any(self.last < 0):
            raise ValueError("last at-risk day outside 0..K")
        obs = self.kind == TREATED
        if np.any((self.t_obs[obs] < 1) | (self.t_obs[obs] > self.K)):
            raise ValueError("observed indication times must lie in 1..K")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.X.shape[2]

    @property
    def untreated(self) -> np.ndarray:
        return np.flatnonzero(self.kind == UNTREATED)

    @property
    def untreated_ids(self) -> list[str]:
        return [self.ids[i] for i in self.untreated]

    def records(self):
        """Per-unit likelihood records (see :class:`model.UnitRecord`)."""
        from .model import UnitRecord
        labels = {TREATED: "treated", KNOWN_CENSORED: "censored", UNTREATED: "untreated"}
        return [UnitRecord(labels[int(k)], int(a), float(d), int(t))
                for k, a, d, t in zip(self.kind, self.last, self.D, self.t_obs)]


def prepare_window(cohort: Cohort, K: int, *, baseline: Sequence[str] | None = None,
                   time_varying: Sequence[str] | None = None, intercept: bool = True,
                   standardize: bool = True,
                   standardization: tuple[Standardization, Standardization] | None = None
                   ) -> WindowData:
    """Build the design and indication status of every unit for window ``K``.

    Treated units indicated after ``K`` are known to have no indication
    inside the window.  An indication recorded on day 0 is placed on day 1,
    the first day of the daily process.
    """
    bnames = list(cohort.baseline_names if baseline is None else baseline)
    vnames = list(cohort.visit_names if time_varying is None else time_varying)
    for name in bnames:
        if name not in cohort.baseline_names:
            raise KeyError(f"unknown baseline covariate {name!r}")
    for name in vnames:
        if name not in cohort.visit_names:
            raise KeyError(f"unknown time-varying covariate {name!r}")
    bidx = [cohort.baseline_names.index(n) for n in bnames]
    vidx = [cohort.visit_names.index(n) for n in vnames]
    if standardization is not None:
        bstd, vstd = standardization
    elif standardize:
        bstd, vstd = cohort_standardizations(cohort)
    else:
        bstd = vstd = None
    X = build_design(cohort, K, baseline_cols=bidx, visit_cols=vidx,
                     baseline_std=bstd, visit_std=vstd, intercept=intercept)
    kind, t_obs, last = [], [], []
    for u in cohort:
        if u.treated and u.indication_day <= K:
            t = max(u.indication_day, 1)
            kind.append(TREATED)
            t_obs.append(t)
            last.append(t)
        elif u.treated:
            kind.append(KNOWN_CENSORED)
            t_obs.append(CENSORED)
            last.append(K)
        else:
            kind.append(UNTREATED)
            t_obs.append(CENSORED)
            last.append(u.last_at_risk_day(K))
    names = (["intercept"] if intercept else []) + bnames + vnames
    D = [float(u.exogenous[0]) for u in cohort]
    return WindowData([u.unit_id for u in cohort], X, kind, t_obs, last, D, K, names)


# -- conjugate and Metropolis blocks --------------------------------------------

def truncated_normal(mean: float, sd: float, lo: float, hi: float, u: float) -> float:
    """Inverse-CDF draw from N(mean, sd^2) restricted to (lo, hi)."""
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if a > 0:
        # work in the upper tail to keep precision
        sa, sb = special.ndtr(-a), special.ndtr(-b)
        x = -special.ndtri(sa - u * (sa - sb))
    else:
        fa, fb = special.ndtr(a), special.ndtr(b)
        x = special.ndtri(fa + u * (fb - fa))
    value = mean + sd * x
    if not np.isfinite(value):
        value = lo if a > 0 else hi
    eps = 1e-12 * (hi - lo)
    return float(min(max(value, lo + eps), hi - eps))


def beta_posterior_draw(XtX: np.ndarray, Xtr: np.ndarray, prior: PriorSpec,
                        rng: np.random.Generator) -> np.ndarray:
    p = len(Xtr)
    if p == 0:
        return np.zeros(0)
    prior_prec = np.linalg.inv(prior.beta_cov)
    prec = prior_prec + XtX
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise SamplerError("posterior precision of beta is not positive definite") from None
    rhs = prior_prec @ prior.beta_mean + Xtr
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return mean + np.linalg.solve(chol.T, rng.standard_normal(p))


def sample_beta(W, theta, X, prior: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    """Conjugate draw of beta from utilities regressed on covariates.

    ``W``, ``theta`` and the rows of ``X`` are aligned observation days;
    the residual ``W - theta`` has unit noise.
    """
    X = np.asarray(X, dtype=float).reshape(len(np.atleast_1d(W)), -1)
    r = np.asarray(W, dtype=float) - np.asarray(theta, dtype=float)
    return beta_posterior_draw(X.T @ X, X.T @ r, prior, rng)


def rho_posterior_draw(sxx: float, sxy: float, prior: PriorSpec,
                       rng: np.random.Generator) -> float:
    prec = 1.0 / prior.rho_sd ** 2 + sxx
    mean = (prior.rho_mean / prior.rho_sd ** 2 + sxy) / prec
    return truncated_normal(mean, 1.0 / np.sqrt(prec), -1.0, 1.0, rng.random())


def sample_rho(paths: Sequence[np.ndarray], prior: PriorSpec, rng: np.random.Generator) -> float:
    """Draw rho given latent paths, each regressed on its own lag."""
    sxx = sum(float(np.dot(p[:-1], p[:-1])) for p in paths)
    sxy = sum(float(np.dot(p[:-1], p[1:])) for p in paths)
    return rho_posterior_draw(sxx, sxy, prior, rng)


def _delta_log_target(d0: float, log_u: float, D1: np.ndarray, D0: np.ndarray,
                      prior: PriorSpec) -> float:
    d1 = -np.exp(log_u)
    ll = np.sum(special.log_expit(d0 + d1 * D1)) + np.sum(special.log_expit(-(d0 + d1 * D0)))
    lp = -0.5 * ((d0 - prior.delta0_mean) / prior.delta0_sd) ** 2
    # Gamma on u = -delta1, plus the log-Jacobian of u = exp(log_u)
    lp += prior.delta1_gamma_shape * log_u - prior.delta1_gamma_rate * np.exp(log_u)
    return float(ll + lp)


def sample_delta(D_treated, D_control, prior: PriorSpec, delta0: float, delta1: float,
                 proposal_chol: np.ndarray, rng: np.random.Generator):
    """One random-walk Metropolis step on ``(delta0, log(-delta1))``.

    ``D_treated`` and ``D_control`` hold the exogenous covariate of units
    with an indication in the window that were, respectively, treated and
    not treated.  Returns ``(delta0, delta1, accepted)``.
    """
    D1 = np.asarray(D_treated, dtype=float)
    D0 = np.asarray(D_control, dtype=float)
    cur = np.array([delta0, np.log(-delta1)])
    prop = cur + proposal_chol @ rng.standard_normal(2)
    log_ratio = (_delta_log_target(prop[0], prop[1], D1, D0, prior)
                 - _delta_log_target(cur[0], cur[1], D1, D0, prior))
    if np.log(rng.random()) < log_ratio:
        return float(prop[0]), float(-np.exp(prop[1])), True
    return float(delta0), float(delta1), False


# -- the sampler -----------------------------------------------------------------

class GibbsSampler:
    """State and update blocks of one chain."""

    def __init__(self, data: WindowData, prior: PriorSpec, config: McmcConfig,
                 chain: int = 0, rng: np.random.Generator | None = None):
        if len(prior.beta_mean) != data.p:
            raise ValueError(f"prior has {len(prior.beta_mean)} coefficients, design has {data.p}")
        self.data = data
        self.prior = prior
        self.config = config
        self.chain = chain
        if rng is None:
            seq = np.random.SeedSequence(config.seed).spawn(chain + 1)[chain]
            rng = np.random.default_rng(seq)
        self.rng = rng
        n, K = data.n, data.K
        self.T = np.where(data.kind == TREATED, data.t_obs, CENSORED).astype(np.int64)
        self.theta = np.zeros((n, K + 1))
        self.W = np.zeros((n, K + 1))
        self.eta = np.zeros((n, K + 1))
        self._m = np.zeros((n, K + 1))
        self._logw = np.zeros(K + 2)
        self._untreated = data.untreated.astype(np.int64)
        self._stats = None
        self._Xtr = np.zeros(data.p)
        npk = data.p * (data.p + 1) // 2
        # cumulative Gram sums make X'X an O(n p^2) lookup; skip when too large
        self._gram = kern.gram_prefix(data.X) if n * (K + 1) * npk <= 2.5e7 else None
        self._init_parameters()
        self.proposal_chol = np.diag([config.step_delta0, config.step_delta1])
        self.n_accept = 0
        self.n_proposed = 0
        self.rho_step = config.step_rho
        self.rho_accept = 0
        self.rho_proposed = 0

    def _init_parameters(self):
        rng = self.rng
        d = self.data
        self.beta = np.array(self.prior.beta_mean, dtype=float)
        if d.p and np.allclose(d.X[:, :, 0], 1.0):
            # start the intercept near the empirical daily indication rate
            events = max(int(np.sum(d.kind == TREATED)), 1)
            exposure = max(int(np.sum(np.where(d.kind == TREATED, d.t_obs, d.last))), 1)
            self.beta[0] = special.ndtri(min(events / exposure, 0.5)) * np.sqrt(2.0)
        self.beta = self.beta + 0.1 * rng.standard_normal(d.p)
        self.rho = float(np.clip(self.prior.rho_mean + 0.2 * rng.standard_normal(), -0.9, 0.9))
        self.delta0 = float(self.prior.delta0_mean + 0.5 * rng.standard_normal())
        mean_u = self.prior.delta1_gamma_shape / self.prior.delta1_gamma_rate
        self.delta1 = float(-mean_u * np.exp(0.3 * rng.standard_normal()))
        kern.linear_predictor(d.X, self.beta, self.eta)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.rho, self.beta.copy(), self.delta0, self.delta1)

    def observed_lengths(self) -> np.ndarray:
        return np.where(self.T > 0, self.T, self.data.last)

    def step_utilities(self):
        k = kern.count_observed(self.T, self.data.last)
        z = self.rng.standard_normal(k)
        u = self.rng.random(k)
        kern.draw_utilities(self.eta, self.theta, self.T, self.data.last, z, u, self.W)

    def _rho_marginal_target(self, rho: float) -> float:
        d = self.data
        Pp = kern.filter_variances(rho, d.K)[1]
        ll = kern.kalman_loglik(self.W, self.eta, self.T, d.last, rho, Pp)
        return ll - 0.5 * ((rho - self.prior.rho_mean) / self.prior.rho_sd) ** 2

    def step_rho_collapsed(self):
        """Metropolis move on rho with the latent paths integrated out.

        Paths and rho are strongly coupled, so the conjugate update of rho
        given theta alone mixes slowly.  A fresh path draw must follow.
        """
        prop = self.rho + self.rho_step * self.rng.standard_normal()
        log_u = np.log(self.rng.random())
        self.rho_proposed += 1
        if not -1.0 < prop < 1.0:
            return False
        if log_u < self._rho_marginal_target(prop) - self._rho_marginal_target(self.rho):
            self.rho = float(prop)
            self.rho_accept += 1
            return True
        return False

    def step_theta(self):
        K = self.data.K
        self.step_rho_collapsed()
        P, Pp = kern.filter_variances(self.rho, K)
        k = kern.count_observed(self.T, self.data.last) + self.data.n
        z = self.rng.standard_normal(k)
        d = self.data
        sxx, sxy = kern.ffbs(self.W, self.eta, self.T, d.last, self.rho, P, Pp, z,
                             self.theta, self._m, d.X, self._Xtr)
        if self._gram is not None:
            XtX = kern.gram_from_prefix(self._gram, self.T, d.last, d.p)
        else:
            XtX = kern.gram_direct(d.X, self.T, d.last)
        self._stats = (XtX, self._Xtr.copy(), sxx, sxy)

    def step_beta(self):
        XtX, Xtr, _, _ = self._stats
        self.beta = beta_posterior_draw(XtX, Xtr, self.prior, self.rng)
        kern.linear_predictor(self.data.X, self.beta, self.eta)

    def step_rho(self):
        _, _, sxx, sxy = self._stats
        self.rho = rho_posterior_draw(sxx, sxy, self.prior, self.rng)

    def log_one_minus_pi(self) -> np.ndarray:
        return special.log_expit(-(self.delta0 + self.delta1 * self.data.D))

    def step_times(self):
        units = self._untreated
        if len(units) == 0:
            return
        k = kern.count_tail(units, self.T, self.data.last)
        z = self.rng.standard_normal(k)
        u = self.rng.random(len(units))
        kern.impute_times(units, self.theta, self.eta, self.T, self.data.last, self.rho,
                          self.log_one_minus_pi(), z, u, self._logw)

    def step_delta(self):
        d = self.data
        D1 = d.D[d.kind == TREATED]
        D0 = d.D[self._untreated][self.T[self._untreated] > 0]
        self.delta0, self.delta1, accepted = sample_delta(
            D1, D0, self.prior, self.delta0, self.delta1, self.proposal_chol, self.rng)
        self.n_proposed += 1
        self.n_accept += int(accepted)
        return accepted

    def sweep(self):
        self.step_utilities()
        self.step_theta()
        self.step_beta()
        self.step_rho()
        self.step_times()
        return self.step_delta()

    def run(self) -> dict:
        """Run the configured number of iterations and keep thinned draws."""
        cfg = self.config
        S = cfg.draws_per_chain
        nu = len(self._untreated)
        out = {
            "rho": np.empty(S), "delta0": np.empty(S), "delta1": np.empty(S),
            "beta": np.empty((S, self.data.p)),
            "t_mis": np.empty((S, nu), dtype=np.int32),
            "iteration": np.empty(S, dtype=np.int64),
        }
        adapt_window, window_accept, rho_window, s = 50, 0, 0, 0
        history = []
        for it in range(cfg.n_iters):
            try:
                accepted = self.sweep()
            except (FloatingPointError, np.linalg.LinAlgError, SamplerError) as exc:
                raise SamplerError(str(exc), self.chain, it) from exc
            if not (np.isfinite(self.rho) and np.all(np.isfinite(self.beta))
                    and np.isfinite(self.delta0) and np.isfinite(self.delta1)):
                raise SamplerError("non-finite parameter", self.chain, it)
            if it < cfg.burn_in:
                if cfg.adapt:
                    window_accept += int(accepted)
                    history.append((self.delta0, np.log(-self.delta1)))
                    if (it + 1) % adapt_window == 0:
                        self._adapt(window_accept / adapt_window, history, it)
                        rate = (self.rho_accept - rho_window) / adapt_window
                        if rate < 0.3:
                            self.rho_step *= 0.8
                        elif rate > 0.5:
                            self.rho_step *= 1.25
                        rho_window = self.rho_accept
                        window_accept = 0
                if it + 1 == cfg.burn_in:
                    self.n_accept = self.n_proposed = 0
                    self.rho_accept = self.rho_proposed = 0
            elif (it - cfg.burn_in) % cfg.thin == 0:
                out["rho"][s] = self.rho
                out["delta0"][s] = self.delta0
                out["delta1"][s] = self.delta1
                out["beta"][s] = self.beta
                out["t_mis"][s] = self.T[self._untreated]
                out["iteration"][s] = it
                s += 1
        out["acceptance"] = self.n_accept / max(self.n_proposed, 1)
        out["rho_acceptance"] = self.rho_accept / max(self.rho_proposed, 1)
        return out

    def _adapt(self, rate: float, history, it: int):
        """Tune the delta proposal during burn-in only."""
        burn = self.config.burn_in
        if it + 1 >= burn // 2 and len(history) >= 200 and not getattr(self, "_shaped", False):
            arr = np.array(history[len(history) // 2:])
            cov = np.cov(arr.T) + 1e-8 * np.eye(2)
            try:
                self.proposal_chol = np.linalg.cholesky(cov * 2.38 ** 2 / 2)
                self._shaped = True
            except np.linalg.LinAlgError:
                pass
            return
        if rate < 0.3:
            self.proposal_chol = self.proposal_chol * 0.8
        elif rate > 0.5:
            self.proposal_chol = self.proposal_chol * 1.25


@dataclass
class PosteriorDraws:
    """Post-burn-in draws from all chains, indexed ``[chain, draw]``."""

    K: int
    rho: np.ndarray
    delta0: np.ndarray
    delta1: np.ndarray
    beta: np.ndarray
    t_mis: np.ndarray
    iteration: np.ndarray
    untreated_ids: list[str]
    beta_names: list[str]
    acceptance: np.ndarray
    rho_acceptance: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.rho.shape[0]

    @property
    def n_draws(self) -> int:
        return self.rho.shape[0] * self.rho.shape[1]

    @property
    def n0(self) -> np.ndarray:
        """Number of untreated units with an imputed indication in 1..K."""
        return np.sum((self.t_mis >= 1) & (self.t_mis <= self.K), axis=2)

    def params(self, chain: int, draw: int) -> ModelParams:
        return ModelParams(float(self.rho[chain, draw]), self.beta[chain, draw],
                           float(self.delta0[chain, draw]), float(self.delta1[chain, draw]))

    def flat_params(self) -> list[ModelParams]:
        return [self.params(c, s) for c in range(self.rho.shape[0])
                for s in range(self.rho.shape[1])]

    def scalar_traces(self) -> dict[str, np.ndarray]:
        """Traces of every scalar quantity, each shaped (chains, draws)."""
        out = {"rho": self.rho, "delta0": self.delta0, "delta1": self.delta1}
        for j, name in enumerate(self.beta_names):
            out[f"beta_{j + 1}"] = self.beta[:, :, j]
        out["n0"] = self.n0.astype(float)
        return out


def _run_one(args):
    data, prior, config, chain = args
    return GibbsSampler(data, prior, config, chain).run()


def run_chain(data: WindowData, config: McmcConfig, prior: PriorSpec,
              threads: int = 1) -> PosteriorDraws:
    """Run ``config.n_chains`` independent chains and collect their draws.

    Chain ``c`` uses the ``c``-th child of ``SeedSequence(config.seed)``, so
    output does not depend on ``threads``.
    """
    jobs = [(data, prior, config, c) for c in range(config.n_chains)]
    if threads > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, config.n_chains)) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return PosteriorDraws(
        K=data.K,
        rho=np.stack([r["rho"] for r in results]),
        delta0=np.stack([r["delta0"] for r in results]),
        delta1=np.stack([r["delta1"] for r in results]),
        beta=np.stack([r["beta"] for r in results]),
        t_mis=np.stack([r["t_mis"] for r in results]),
        iteration=results[0]["iteration"],
        untreated_ids=data.untreated_ids,
        beta_names=list(data.names),
        acceptance=np.array([r["acceptance"] for r in results]),
        rho_acceptance=np.array([r["rho_acceptance"] for r in results]),
    )


# -- single-unit conveniences ------------------------------------------------------

def _single(theta, X, T, last):
    theta = np.atleast_2d(np.asarray(theta, dtype=float)).copy()
    X = np.asarray(X, dtype=float)[None]
    return theta, np.ascontiguousarray(X), np.array([T], dtype=np.int64), np.array([last], dtype=np.int64)


def sample_utilities(theta, X, beta, T_current: int, K: int, rng: np.random.Generator,
                     last: int | None = None) -> np.ndarray:
    """Utilities on days 1..min(T, K) given a latent path.

    ``theta`` and ``X`` cover days 0..K.  Returns an array whose entry
    ``t - 1`` is the utility of day ``t``.
    """
    last = K if last is None else last
    T = T_current if 0 < T_current <= K else CENSORED
    theta2, X3, Ta, la = _single(theta, X, T, last)
    eta = np.empty((1, K + 1))
    kern.linear_predictor(X3[:, :K + 1], np.asarray(beta, float), eta)
    L = T if T > 0 else last
    W = np.zeros((1, K + 1))
    kern.draw_utilities(eta, theta2, Ta, la, rng.standard_normal(L), rng.random(L), W)
    return W[0, 1:L + 1]


def ffbs_theta(W, X, beta, rho: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """Joint draw of theta_0..K given utilities on days 1..len(W).

    Days after the last utility are propagated from the AR(1) prior.
    """
    W = np.asarray(W, dtype=float)
    L = len(W)
    eta = np.empty((1, K + 1))
    kern.linear_predictor(np.ascontiguousarray(np.asarray(X, float)[None, :K + 1]),
                          np.asarray(beta, float), eta)
    Wf = np.zeros((1, K + 1))
    Wf[0, 1:L + 1] = W
    theta = np.zeros((1, K + 1))
    P, Pp = kern.filter_variances(rho, K)
    X3 = np.ascontiguousarray(np.asarray(X, float)[None, :K + 1])
    kern.ffbs(Wf, eta, np.array([CENSORED]), np.array([L]), rho, P, Pp,
              rng.standard_normal(L + 1), theta, np.zeros((1, K + 1)), X3, np.zeros(X3.shape[2]))
    for t in range(L + 1, K + 1):
        theta[0, t] = rho * theta[0, t - 1] + rng.standard_normal()
    return theta[0]


def impute_indication_time(theta, X, params: ModelParams, D: float, K: int,
                           rng: np.random.Generator, last: int | None = None) -> int:
    """Draw the indication time of an untreated unit given its full path."""
    last = K if last is None else last
    theta2, X3, Ta, la = _single(theta, X, CENSORED, last)
    eta = np.empty((1, K + 1))
    kern.linear_predictor(X3[:, :K + 1], params.beta, eta)
    log_1mpi = special.log_expit(-(params.delta0 + params.delta1 * np.array([float(D)])))
    kern.impute_times(np.array([0], dtype=np.int64), theta2, eta, Ta, la, params.rho,
                      log_1mpi, np.zeros(0), np.array([rng.random()]), np.zeros(K + 2))
    return int(Ta[0])
