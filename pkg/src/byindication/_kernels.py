"""Compiled per-unit loops used by the Gibbs sweep.

Every kernel consumes random numbers drawn beforehand from a numpy
``Generator`` so that results depend only on the caller's stream.
Arrays are indexed ``[unit, day]`` with day 0 holding the initial state.
"""
import math

import numpy as np
from numba import njit

Z_CLAMP = 37.0
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


@njit(cache=True)
def ndtr(z):
    if z > Z_CLAMP:
        z = Z_CLAMP
    elif z < -Z_CLAMP:
        z = -Z_CLAMP
    return 0.5 * math.erfc(-z / _SQRT2)


@njit(cache=True)
def log_ndtr(z):
    # erfc stays representable at the clamp (about 1e-299)
    if z > Z_CLAMP:
        z = Z_CLAMP
    elif z < -Z_CLAMP:
        z = -Z_CLAMP
    return math.log(0.5 * math.erfc(-z / _SQRT2))


@njit(cache=True)
def ndtri(p):
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # one Halley step brings the relative error near machine precision
    if x < -37.5 or x > 37.5:
        return x
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@njit(cache=True)
def truncnorm_below_zero(mu, z, u):
    """Draw from N(mu, 1) restricted to (-inf, 0).

    ``z`` is a standard normal and ``u`` a uniform; the normal is used
    directly when it lands in the region, otherwise the inverse CDF.
    """
    w = mu + z
    if w < 0.0:
        return w
    c = -mu
    mass = ndtr(c)
    x = ndtri(max(u * mass, 1e-300))
    if x > c:
        x = c
    w = mu + x
    return w if w < 0.0 else -1e-300


@njit(cache=True)
def truncnorm_above_zero(mu, z, u):
    """Draw from N(mu, 1) restricted to [0, inf)."""
    w = mu + z
    if w >= 0.0:
        return w
    c = -mu
    mass = ndtr(-c)
    x = -ndtri(max(u * mass, 1e-300))
    if x < c:
        x = c
    w = mu + x
    return w if w >= 0.0 else 0.0


@njit(cache=True)
def draw_utilities(eta, theta, T, last, z, u, W):
    """Utilities on days 1..L for every unit.

    ``L`` is the hitting day ``T`` when positive, else ``last``.  Days
    before the hit get negative utilities and the hit day a non-negative one.
    ``z`` and ``u`` are flat arrays with one entry per utility drawn.
    """
    k = 0
    n = eta.shape[0]
    for i in range(n):
        L = T[i] if T[i] > 0 else last[i]
        for t in range(1, L + 1):
            mu = theta[i, t] + eta[i, t]
            if t == T[i]:
                W[i, t] = truncnorm_above_zero(mu, z[k], u[k])
            else:
                W[i, t] = truncnorm_below_zero(mu, z[k], u[k])
            k += 1
    return k


@njit(cache=True)
def filter_variances(rho, K):
    """Filtered and predicted state variances for a fully observed prefix."""
    P = np.empty(K + 1)
    Pp = np.empty(K + 1)
    P[0] = 1.0
    Pp[0] = 1.0
    for t in range(1, K + 1):
        Pp[t] = rho * rho * P[t - 1] + 1.0
        P[t] = Pp[t] / (Pp[t] + 1.0)
    return P, Pp


@njit(cache=True)
def ffbs(W, eta, T, last, rho, P, Pp, z, theta, m, X, Xtr):
    """Forward filter, backward sample theta_0..L for every unit.

    Observations are ``y_t = W_t - eta_t = theta_t + e_t`` for t = 1..L.
    ``m`` is scratch space for the filtered means.  While sampling, the
    residuals ``W_t - theta_t`` are accumulated into ``Xtr`` and the lag
    products of the paths are returned as ``(sxx, sxy)``.
    """
    k = 0
    n = W.shape[0]
    p = X.shape[2]
    for a in range(p):
        Xtr[a] = 0.0
    sxx = 0.0
    sxy = 0.0
    for i in range(n):
        L = T[i] if T[i] > 0 else last[i]
        m[i, 0] = 0.0
        for t in range(1, L + 1):
            mp = rho * m[i, t - 1]
            gain = Pp[t] / (Pp[t] + 1.0)
            m[i, t] = mp + gain * (W[i, t] - eta[i, t] - mp)
        theta[i, L] = m[i, L] + math.sqrt(P[L]) * z[k]
        k += 1
        for t in range(L - 1, -1, -1):
            J = P[t] * rho / Pp[t + 1]
            mean = m[i, t] + J * (theta[i, t + 1] - rho * m[i, t])
            var = P[t] - J * J * Pp[t + 1]
            if var < 0.0:
                var = 0.0
            theta[i, t] = mean + math.sqrt(var) * z[k]
            k += 1
            nxt = theta[i, t + 1]
            r = W[i, t + 1] - nxt
            for a in range(p):
                Xtr[a] += X[i, t + 1, a] * r
            sxx += theta[i, t] * theta[i, t]
            sxy += theta[i, t] * nxt
    return sxx, sxy


@njit(cache=True)
def kalman_loglik(W, eta, T, last, rho, Pp):
    """Log-density of all utilities given beta and rho, theta integrated out.

    Constant terms are dropped.
    """
    n = W.shape[0]
    K1 = Pp.shape[0]
    cum_logS = np.zeros(K1)
    inv_S = np.empty(K1)
    gain = np.empty(K1)
    for t in range(1, K1):
        cum_logS[t] = cum_logS[t - 1] + math.log(Pp[t] + 1.0)
        inv_S[t] = 1.0 / (Pp[t] + 1.0)
        gain[t] = Pp[t] * inv_S[t]
    quad = 0.0
    logdet = 0.0
    for i in range(n):
        L = T[i] if T[i] > 0 else last[i]
        logdet += cum_logS[L]
        m = 0.0
        for t in range(1, L + 1):
            v = W[i, t] - eta[i, t] - rho * m
            quad += v * v * inv_S[t]
            m = rho * m + gain[t] * v
    return -0.5 * (quad + logdet)


@njit(cache=True)
def gram_prefix(X):
    """Running sums of x_t x_t' over days 1..t as packed upper triangles."""
    n, K1, p = X.shape
    npk = p * (p + 1) // 2
    C = np.zeros((n, K1, npk))
    for i in range(n):
        for t in range(1, K1):
            c = 0
            for a in range(p):
                for b in range(a, p):
                    C[i, t, c] = C[i, t - 1, c] + X[i, t, a] * X[i, t, b]
                    c += 1
    return C


@njit(cache=True)
def gram_from_prefix(C, T, last, p):
    n = C.shape[0]
    npk = C.shape[2]
    acc = np.zeros(npk)
    for i in range(n):
        L = T[i] if T[i] > 0 else last[i]
        for c in range(npk):
            acc[c] += C[i, L, c]
    XtX = np.empty((p, p))
    c = 0
    for a in range(p):
        for b in range(a, p):
            XtX[a, b] = acc[c]
            XtX[b, a] = acc[c]
            c += 1
    return XtX


@njit(cache=True)
def gram_direct(X, T, last):
    n, K1, p = X.shape
    XtX = np.zeros((p, p))
    for i in range(n):
        L = T[i] if T[i] > 0 else last[i]
        for t in range(1, L + 1):
            for a in range(p):
                xa = X[i, t, a]
                for b in range(a, p):
                    XtX[a, b] += xa * X[i, t, b]
    for a in range(p):
        for b in range(a):
            XtX[a, b] = XtX[b, a]
    return XtX


@njit(cache=True)
def linear_predictor(X, beta, eta):
    n, K1, p = X.shape
    for i in range(n):
        for t in range(K1):
            s = 0.0
            for a in range(p):
                s += X[i, t, a] * beta[a]
            eta[i, t] = s


@njit(cache=True)
def impute_times(units, theta, eta, T, last, rho, log_1mpi, z, u, w):
    """Redraw indication times for the listed untreated units.

    The path beyond the current observation end is first regenerated from
    the AR(1) prior with ``rho``; then ``T`` is drawn from weights
    ``P(T=t | theta) (1 - pi)`` on days 1..last and ``P(no hit | theta)``.
    ``w`` is scratch space of length K + 1.
    """
    k = 0
    for j in range(units.shape[0]):
        i = units[j]
        A = last[i]
        L = T[i] if T[i] > 0 else A
        for t in range(L + 1, A + 1):
            theta[i, t] = rho * theta[i, t - 1] + z[k]
            k += 1
        keep = math.exp(log_1mpi[i])
        surv = 1.0
        total = 0.0
        for t in range(1, A + 1):
            mu = theta[i, t] + eta[i, t]
            if mu > Z_CLAMP:
                mu = Z_CLAMP
            elif mu < -Z_CLAMP:
                mu = -Z_CLAMP
            # one erfc per day; the small tail is always computed directly
            if mu < 0.0:
                q = 0.5 * math.erfc(-mu / _SQRT2)
                s = 1.0 - q
            else:
                s = 0.5 * math.erfc(mu / _SQRT2)
                q = 1.0 - s
            w[t] = q * surv * keep
            total += w[t]
            surv *= s
            if surv < 1e-300:
                # later weights are negligible next to the total of at least 1 - pi
                for r in range(t + 1, A + 1):
                    w[r] = 0.0
                surv = 0.0
                break
        w[0] = surv
        total += surv
        target = u[j] * total
        acc = w[0]
        choice = -1
        if target >= acc:
            choice = 0
            for t in range(1, A + 1):
                acc += w[t]
                if target < acc:
                    choice = t
                    break
            if choice == 0:
                # rounding at the top end of the cumulative sum
                choice = -1
                for t in range(A, 0, -1):
                    if w[t] > 0.0:
                        choice = t
                        break
        T[i] = choice
    return k


@njit(cache=True)
def count_tail(units, T, last):
    k = 0
    for j in range(units.shape[0]):
        i = units[j]
        L = T[i] if T[i] > 0 else last[i]
        k += last[i] - L
    return k


@njit(cache=True)
def count_observed(T, last):
    k = 0
    for i in range(T.shape[0]):
        k += T[i] if T[i] > 0 else last[i]
    return k


@njit(cache=True)
def path_log_terms(noise, eta, rho, kind, last, log_pi, log_1mpi, out):
    """Per-path log-likelihood terms of one unit under several draws.

    ``noise`` is ``(paths, >= last + 1)`` standard normals, ``eta`` is
    ``(draws, >= last + 1)`` and ``out`` is ``(draws, paths)``.  ``kind`` is
    0 for an observed indication on day ``last``, 1 for a known absence of
    indication through ``last`` and 2 for an untreated unit.
    """
    D = eta.shape[0]
    M = noise.shape[0]
    for d in range(D):
        r = rho[d]
        for m in range(M):
            th = noise[m, 0]
            log_surv = 0.0
            prod = 1.0
            stop = last - 1 if kind == 0 else last
            for t in range(1, stop + 1):
                th = r * th + noise[m, t]
                mu = th + eta[d, t]
                if mu > Z_CLAMP:
                    mu = Z_CLAMP
                elif mu < -Z_CLAMP:
                    mu = -Z_CLAMP
                prod *= 0.5 * math.erfc(mu / _SQRT2)
                if prod < 1e-200:
                    log_surv += math.log(prod)
                    prod = 1.0
            log_surv += math.log(prod)
            if kind == 0:
                th = r * th + noise[m, last]
                out[d, m] = log_ndtr(th + eta[d, last]) + log_surv + log_pi[d]
            elif kind == 1:
                out[d, m] = log_surv
            else:
                a = log_1mpi[d]
                b = log_pi[d] + log_surv
                hi = a if a > b else b
                out[d, m] = hi + math.log(math.exp(a - hi) + math.exp(b - hi))
