import numpy as np

from byindication.cohort import Cohort, CohortUnit
from byindication.sampler import PosteriorDraws


def make_unit(uid, treated=False, day=None, death=None, followup=400, baseline=(0.0,),
              visits=((0, (0.0,)),), D=0.0):
    days = np.array([d for d, _ in visits], dtype=np.int64)
    values = np.array([v for _, v in visits], dtype=float).reshape(len(days), -1)
    return CohortUnit(str(uid), treated, day, np.asarray(baseline, dtype=float), days, values,
                      death, followup, np.array([float(D)]))


def make_cohort(units, n_base=1, n_visit=1):
    return Cohort(list(units), [f"b{j + 1}" for j in range(n_base)],
                  [f"v{j + 1}" for j in range(n_visit)])


def ar1_prior_cov(rho, K):
    """Covariance of theta_0..K with theta_0 ~ N(0, 1) and unit innovations."""
    A = np.array([[rho ** (t - s) if s <= t else 0.0 for s in range(K + 1)]
                  for t in range(K + 1)])
    return A @ A.T


def dense_posterior(y, rho, K):
    """Exact mean and covariance of theta_0..K given y_t = theta_t + e_t, t = 1..len(y)."""
    S = ar1_prior_cov(rho, K)
    L = len(y)
    H = np.zeros((L, K + 1))
    H[np.arange(L), np.arange(1, L + 1)] = 1.0
    prec = np.linalg.inv(S) + H.T @ H
    cov = np.linalg.inv(prec)
    return cov @ H.T @ np.asarray(y, dtype=float), cov


def moment_z_scores(samples, mean, cov):
    """z-scores of sample means and variances against exact moments."""
    n = len(samples)
    var = np.diag(cov)
    z_mean = (samples.mean(axis=0) - mean) / np.sqrt(var / n)
    # the sample variance of a normal has standard error var * sqrt(2 / (n - 1))
    z_var = (samples.var(axis=0, ddof=1) - var) / (var * np.sqrt(2.0 / (n - 1)))
    return z_mean, z_var


def fake_draws(K, t_mis, ids):
    t = np.asarray(t_mis, dtype=np.int32)
    if t.ndim == 2:
        t = t[None]
    C, S, _ = t.shape
    z = np.zeros((C, S))
    return PosteriorDraws(K, z + 0.1, z, z - 0.01, np.zeros((C, S, 1)), t, np.arange(S),
                          list(ids), ["intercept"], np.zeros(C))
