"""Latent AR(1) probit first-hitting-time model for indication times.

A unit's latent health follows ``theta_t = rho * theta_{t-1} + eps_t`` with
unit innovations and ``theta_0 ~ N(0, 1)``.  On day ``t`` an indication fires
with probability ``Phi(theta_t + x_t' beta)``; the indication time is the
first day it fires.  Treatment is then assigned with probability
``invlogit(delta0 + delta1 * D)`` where ``D`` is an exogenous covariate
(calendar time at entry).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal, special

from .cohort import CENSORED

Z_CLAMP = 37.0


class LikelihoodError(ArithmeticError):
    """A likelihood evaluation produced a non-finite value."""


@dataclass(frozen=True)
class ModelParams:
    rho: float
    beta: np.ndarray
    delta0: float
    delta1: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.delta1 > 0:
            raise ValueError(f"delta1 must be non-positive, got {self.delta1}")


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors on the model parameters.

    ``rho`` is normal truncated to (-1, 1), ``beta`` multivariate normal,
    ``delta0`` normal and ``-delta1`` Gamma(shape, rate).
    """

    rho_mean: float = 0.0
    rho_sd: float = 0.5
    beta_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta_cov: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    delta0_mean: float = 0.0
    delta0_sd: float = 2.0
    delta1_gamma_shape: float = 2.0
    delta1_gamma_rate: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "beta_mean", np.atleast_1d(np.asarray(self.beta_mean, float)))
        cov = np.asarray(self.beta_cov, float)
        object.__setattr__(self, "beta_cov", cov.reshape(len(self.beta_mean), len(self.beta_mean)))
        if self.rho_sd <= 0 or self.delta0_sd <= 0:
            raise ValueError("prior standard deviations must be positive")
        if self.delta1_gamma_shape <= 0 or self.delta1_gamma_rate <= 0:
            raise ValueError("Gamma hyperparameters must be positive")
        if len(self.beta_mean):
            try:
                np.linalg.cholesky(self.beta_cov)
            except np.linalg.LinAlgError:
                raise ValueError("beta_cov must be positive definite") from None

    @classmethod
    def default(cls, p: int, beta_sd: float = 3.0, **kw) -> "PriorSpec":
        return cls(beta_mean=np.zeros(p), beta_cov=np.eye(p) * beta_sd ** 2, **kw)


def norm_cdf(z):
    return special.ndtr(np.clip(z, -Z_CLAMP, Z_CLAMP))


def log_norm_cdf(z):
    return special.log_ndtr(np.clip(z, -Z_CLAMP, Z_CLAMP))


def invlogit(x):
    return special.expit(x)


def indication_prob(theta_t, x_t, beta):
    """Daily probability that the indication fires."""
    x_t = np.asarray(x_t, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x_t.shape[-1:] != beta.shape:
        raise ValueError("covariate and coefficient dimensions differ")
    return norm_cdf(np.asarray(theta_t) + x_t @ beta)


def hitting_time(psi) -> int:
    """First day (1-based) on which ``psi`` is one, or ``CENSORED``."""
    psi = np.asarray(psi)
    hits = np.flatnonzero(psi)
    return int(hits[0]) + 1 if len(hits) else CENSORED


def assignment_prob(T, D, delta0, delta1):
    """Probability of treatment upon indication.

    The calendar-time specialization does not depend on ``T``.
    """
    if np.any(np.asarray(delta1) > 0):
        raise ValueError("delta1 must be non-positive")
    return invlogit(delta0 + delta1 * np.asarray(D, dtype=float))


def hitting_pmf_from_probs(q) -> np.ndarray:
    """Distribution of the first hit given daily probabilities ``q_1..q_K``.

    Returns ``K + 1`` entries: ``P(T = 1..K)`` followed by ``P(no hit)``.
    """
    q = np.asarray(q, dtype=float)
    survive = np.concatenate([[1.0], np.cumprod(1.0 - q)])
    return np.concatenate([q * survive[:-1], survive[-1:]])


def hitting_pmf_given_path(theta, X, beta, K) -> np.ndarray:
    """``P(T = t | theta)`` for t = 1..K and the censoring mass.

    ``theta`` is indexed 0..K and ``X`` holds design rows for days 0..K.
    """
    theta = np.asarray(theta, dtype=float)
    if len(theta) < K + 1:
        raise ValueError("path shorter than the window")
    q = indication_prob(theta[1:K + 1], np.asarray(X)[1:K + 1], beta)
    return hitting_pmf_from_probs(q)


def prob_not_treated(pmf, pi) -> float:
    """``P(M = 0)``-complement: no observed treated indication.

    ``pmf`` is the output of :func:`hitting_pmf_from_probs` and ``pi`` the
    assignment probability on each day.
    """
    pmf = np.asarray(pmf, dtype=float)
    pi = np.broadcast_to(np.asarray(pi, dtype=float), pmf[:-1].shape)
    return float(np.sum(pmf[:-1] * (1.0 - pi)) + pmf[-1])


# -- Monte Carlo marginal likelihood -------------------------------------------

@dataclass
class UnitRecord:
    """What the likelihood needs to know about one unit within window K.

    ``kind`` is ``"treated"`` for an observed indication at ``t_obs <= K``,
    ``"censored"`` for a known absence of indication through ``last_day``
    (treated later than the window), and ``"untreated"`` when both the
    indication time and the assignment are missing.
    """

    kind: str
    last_day: int
    D: float
    t_obs: int = CENSORED


def _ar1_paths(noise: np.ndarray, rho: float) -> np.ndarray:
    return signal.lfilter([1.0], [1.0, -rho], noise, axis=-1)


def _unit_noise(seed: int, index: int, mc_paths: int, length: int) -> np.ndarray:
    rng = np.random.default_rng([int(seed), int(index)])
    return rng.standard_normal((mc_paths, length))


def unit_log_terms(record: UnitRecord, X: np.ndarray, params: ModelParams,
                   noise: np.ndarray) -> np.ndarray:
    """Per-path log contributions whose mean-exp is the unit likelihood."""
    last = record.t_obs if record.kind == "treated" else record.last_day
    theta = _ar1_paths(noise[:, :last + 1], params.rho)
    eta = X[1:last + 1] @ params.beta
    z = theta[:, 1:] + eta
    log_pi = float(special.log_expit(params.delta0 + params.delta1 * record.D))
    log_1mpi = float(special.log_expit(-(params.delta0 + params.delta1 * record.D)))
    log_surv = np.sum(log_norm_cdf(-z), axis=1)
    if record.kind == "treated":
        return log_norm_cdf(z[:, -1]) + (log_surv - log_norm_cdf(-z[:, -1])) + log_pi
    if record.kind == "censored":
        return log_surv
    if record.kind == "untreated":
        # sum_t P(T=t)(1 - pi) + P(no hit) with pi constant over days
        return np.logaddexp(log_1mpi, log_pi + log_surv)
    raise ValueError(f"unknown unit kind {record.kind!r}")


_KIND_CODES = {"treated": 0, "censored": 1, "untreated": 2}


def unit_log_terms_draws(record: UnitRecord, X: np.ndarray, params_list,
                         noise: np.ndarray) -> np.ndarray:
    """Compiled version of :func:`unit_log_terms` for several draws at once.

    Returns an array shaped ``(draws, paths)``.
    """
    from . import _kernels
    if record.kind not in _KIND_CODES:
        raise ValueError(f"unknown unit kind {record.kind!r}")
    last = record.t_obs if record.kind == "treated" else record.last_day
    if not 0 <= last < min(noise.shape[1], len(X)) or (record.kind == "treated" and last < 1):
        raise ValueError(f"day {last} outside the window of the design and noise")
    Xs = np.asarray(X, dtype=float)[:last + 1]
    # one product per draw keeps equal draws bit-identical
    eta = np.ascontiguousarray(np.array([Xs @ np.asarray(p.beta, dtype=float) for p in params_list]))
    rho = np.array([p.rho for p in params_list], dtype=float)
    lin = np.array([p.delta0 + p.delta1 * record.D for p in params_list], dtype=float)
    out = np.empty((len(params_list), noise.shape[0]))
    _kernels.path_log_terms(np.ascontiguousarray(noise), eta, rho, _KIND_CODES[record.kind],
                            int(last), special.log_expit(lin), special.log_expit(-lin), out)
    return out


def _log_mean_exp(v: np.ndarray) -> tuple[float, float]:
    m = np.max(v)
    w = np.exp(v - m)
    mean = w.mean()
    se = w.std(ddof=1) / np.sqrt(len(w)) if len(w) > 1 else np.inf
    return float(m + np.log(mean)), float(se / mean)


def unit_loglik(record: UnitRecord, X: np.ndarray, params: ModelParams,
                K: int, mc_paths: int = 200, seed: int = 0, index: int = 0,
                return_se: bool = False):
    """Monte Carlo estimate of a unit's marginal log-likelihood.

    Latent paths are drawn from the AR(1) prior using a stream keyed by
    ``(seed, index)``, so repeated evaluations at different parameters share
    random numbers.  With ``return_se`` the delta-method standard error of
    the log estimate is returned too.
    """
    if mc_paths < 1:
        raise ValueError("mc_paths must be positive")
    noise = _unit_noise(seed, index, mc_paths, K + 1)
    value, se = _log_mean_exp(unit_log_terms_draws(record, X, [params], noise)[0])
    if not np.isfinite(value):
        raise LikelihoodError(f"non-finite log-likelihood for unit index {index}")
    return (value, se) if return_se else value


def pool_loglik(records, X: np.ndarray, params: ModelParams, K: int,
                mc_paths: int = 200, seed: int = 0) -> np.ndarray:
    """Per-unit log-likelihoods for a whole pool, with shared random numbers."""
    return pool_loglik_draws(records, X, [params], K, mc_paths, seed)[0]


def pool_loglik_draws(records, X: np.ndarray, params_list, K: int,
                      mc_paths: int = 200, seed: int = 0) -> np.ndarray:
    """Per-unit log-likelihoods under each of several draws, shape ``(draws, units)``.

    Each unit reuses one block of random numbers across all draws.
    """
    if mc_paths < 1:
        raise ValueError("mc_paths must be positive")
    out = np.empty((len(params_list), len(records)))
    for i, rec in enumerate(records):
        noise = _unit_noise(seed, i, mc_paths, K + 1)
        terms = unit_log_terms_draws(rec, X[i], params_list, noise)
        m = terms.max(axis=1, keepdims=True)
        out[:, i] = (m + np.log(np.mean(np.exp(terms - m), axis=1, keepdims=True)))[:, 0]
    if not np.all(np.isfinite(out)):
        raise LikelihoodError("non-finite log-likelihood")
    return out
