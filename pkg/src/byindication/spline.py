"""Natural cubic smoothing splines through a handful of effect estimates."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded


def smoothing_spline_fit(x, y, lam: float, weights=None) -> np.ndarray:
    """Fitted values of the natural cubic smoothing spline at the knots ``x``.

    Minimizes ``sum w_i (y_i - f(x_i))^2 + lam * integral f''(s)^2 ds``
    (Reinsch's algorithm, a pentadiagonal solve).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least three points")
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    h = np.diff(x)
    if np.any(h <= 0):
        raise ValueError("abscissae must be strictly increasing")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if lam == 0:
        return y.copy()
    m = n - 2
    # Q is n x m tridiagonal by columns, R is m x m tridiagonal
    q_lo = 1.0 / h[:-1]
    q_mid = -1.0 / h[:-1] - 1.0 / h[1:]
    q_hi = 1.0 / h[1:]
    r_diag = (h[:-1] + h[1:]) / 3.0
    r_off = h[1:-1] / 6.0
    Winv = 1.0 / w
    # A = R + lam Q' W^-1 Q, pentadiagonal
    d0 = r_diag + lam * (q_lo ** 2 * Winv[:-2] + q_mid ** 2 * Winv[1:-1] + q_hi ** 2 * Winv[2:])
    d1 = r_off + lam * (q_mid[:-1] * q_lo[1:] * Winv[1:-2] + q_hi[:-1] * q_mid[1:] * Winv[2:-1])
    d2 = lam * q_hi[:-2] * q_lo[2:] * Winv[2:-2]
    ab = np.zeros((5, m))
    ab[2] = d0
    ab[1, 1:] = d1
    ab[3, :-1] = d1
    ab[0, 2:] = d2
    ab[4, :-2] = d2
    Qty = q_lo * y[:-2] + q_mid * y[1:-1] + q_hi * y[2:]
    gamma = solve_banded((2, 2), ab, Qty)
    Qg = np.zeros(n)
    Qg[:-2] += q_lo * gamma
    Qg[1:-1] += q_mid * gamma
    Qg[2:] += q_hi * gamma
    return y - lam * Winv * Qg


def smooth_curve(x, y, lam: float, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the smoothing spline on ``grid`` (default: every integer day).

    Returns ``(grid, values)``.  Outside the knots the spline continues
    linearly, as a natural spline does.
    """
    x = np.asarray(x, dtype=float)
    fitted = smoothing_spline_fit(x, y, lam)
    if grid is None:
        grid = np.arange(np.ceil(x[0]), np.floor(x[-1]) + 1)
    grid = np.asarray(grid, dtype=float)
    cs = CubicSpline(x, fitted, bc_type="natural")
    values = cs(grid)
    # CubicSpline extrapolates with the end cubics; a natural spline is linear there
    left, right = grid < x[0], grid > x[-1]
    values[left] = fitted[0] + cs(x[0], 1) * (grid[left] - x[0])
    values[right] = fitted[-1] + cs(x[-1], 1) * (grid[right] - x[-1])
    return grid, values


def curve_bands(x, tau_draws, lam: float, grid, level: float = 0.95, max_draws: int = 1000):
    """Pointwise bands from splines fitted to per-draw effects.

    ``tau_draws`` holds one array of per-draw effects per knot.  Curve ``s``
    takes from each array the draw at the same relative position, since the
    knots come from separate fits.
    """
    arrays = [np.asarray(a, dtype=float) for a in tau_draws]
    if any(len(a) == 0 for a in arrays):
        nan = np.full(len(grid), np.nan)
        return nan, nan.copy()
    S = min(max(len(a) for a in arrays), max_draws)
    # the smoother is linear in y, so apply it to unit vectors once
    n = len(arrays)
    op = np.column_stack([smooth_curve(x, np.eye(n)[j], lam, grid)[1] for j in range(n)])
    Y = np.array([[a[int(s * len(a) / S)] for a in arrays] for s in range(S)])
    curves = Y @ op.T
    alpha = (1 - level) / 2
    return np.quantile(curves, alpha, axis=0), np.quantile(curves, 1 - alpha, axis=0)
