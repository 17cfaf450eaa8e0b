"""Convergence diagnostics and the deviance information criterion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_toeplitz

from .model import ModelParams, pool_loglik_draws


class DiagnosticError(ValueError):
    """A diagnostic is undefined for the given input."""


def spectral_variance_at_zero(x, max_order: int | None = None) -> float:
    """Spectral density at frequency zero from an AR fit chosen by AIC.

    Returns the estimated variance of the sample mean times ``len(x)``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    gamma0 = float(np.dot(xc, xc) / n)
    if gamma0 <= 0:
        raise DiagnosticError("chain segment has zero variance")
    if max_order is None:
        max_order = int(min(n // 4, 10 * np.log10(n)))
    max_order = max(int(max_order), 0)
    acov = np.array([np.dot(xc[: n - k], xc[k:]) / n for k in range(max_order + 1)])
    best_aic, best = n * np.log(gamma0), (0, gamma0, np.zeros(0))
    for k in range(1, max_order + 1):
        phi = solve_toeplitz(acov[:k], acov[1:k + 1])
        sigma2 = acov[0] - phi @ acov[1:k + 1]
        if sigma2 <= 0:
            break
        aic = n * np.log(sigma2) + 2 * k
        if aic < best_aic:
            best_aic, best = aic, (k, sigma2, phi)
    _, sigma2, phi = best
    denom = (1.0 - np.sum(phi)) ** 2
    return float(sigma2 / denom)


def geweke_z(chain, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Compare the means of the first ``frac_a`` and last ``frac_b`` of a chain."""
    x = np.asarray(chain, dtype=float)
    n = len(x)
    if n < 100:
        raise DiagnosticError("chain too short for the Geweke diagnostic")
    if not (0 < frac_a < 1 and 0 < frac_b < 1 and frac_a + frac_b <= 1):
        raise DiagnosticError("invalid segment fractions")
    a = x[: int(frac_a * n)]
    b = x[n - int(frac_b * n):]
    va = spectral_variance_at_zero(a) / len(a)
    vb = spectral_variance_at_zero(b) / len(b)
    return float((a.mean() - b.mean()) / np.sqrt(va + vb))


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor ``sqrt(((n-1)/n W + B/n) / W)``."""
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DiagnosticError("need at least two chains of equal length")
    m, n = x.shape
    if n < 10:
        raise DiagnosticError("chains must have at least 10 draws")
    W = float(np.mean(x.var(axis=1, ddof=1)))
    B = float(n * x.mean(axis=1).var(ddof=1))
    if W <= 0:
        raise DiagnosticError("zero within-chain variance")
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


@dataclass
class DiagnosticRow:
    parameter: str
    geweke: list[float]
    rhat: float | None


def diagnose_traces(traces: dict[str, np.ndarray]) -> list[DiagnosticRow]:
    """Geweke z per chain and R-hat (with two or more chains) for each trace.

    Undefined values are reported as NaN.
    """
    rows = []
    for name, x in traces.items():
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = []
        for c in range(x.shape[0]):
            try:
                z.append(geweke_z(x[c]))
            except DiagnosticError:
                z.append(float("nan"))
        rhat = None
        if x.shape[0] >= 2:
            try:
                rhat = gelman_rubin(x)
            except DiagnosticError:
                rhat = float("nan")
        rows.append(DiagnosticRow(name, z, rhat))
    return rows


@dataclass
class DicResult:
    dic: float
    p_d: float
    mean_deviance: float
    deviance_at_mean: float
    n_draws: int


def _mean(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    # identical draws must give a mean identical to each of them
    return v[0] if np.all(v == v[0]) else v.mean(axis=0)


def posterior_mean(params: list[ModelParams]) -> ModelParams:
    return ModelParams(float(_mean([p.rho for p in params])),
                       _mean([p.beta for p in params]),
                       float(_mean([p.delta0 for p in params])),
                       float(_mean([p.delta1 for p in params])))


def dic(params: list[ModelParams], records, X: np.ndarray, K: int, mc_paths: int = 200,
        seed: int = 0) -> DicResult:
    """``DIC = Dbar + p_D`` with ``p_D = Dbar - D(mean parameters)``.

    Every deviance uses the same random numbers, so identical draws give
    ``p_D = 0`` exactly.
    """
    if not params:
        raise DiagnosticError("no draws supplied")
    allp = list(params) + [posterior_mean(params)]
    ll = pool_loglik_draws(records, X, allp, K, mc_paths, seed)
    dev = -2.0 * ll.sum(axis=1)
    d_bar = float(dev[:-1].mean()) if np.ptp(dev[:-1]) > 0 else float(dev[0])
    d_hat = float(dev[-1])
    p_d = d_bar - d_hat
    return DicResult(d_bar + p_d, p_d, d_bar, d_hat, len(params))


def thinned_params(draws, max_draws: int) -> list[ModelParams]:
    """An evenly spaced subset of the pooled draws."""
    flat = draws.flat_params()
    if max_draws <= 0 or len(flat) <= max_draws:
        return flat
    idx = np.unique(np.linspace(0, len(flat) - 1, max_draws).round().astype(int))
    return [flat[i] for i in idx]
