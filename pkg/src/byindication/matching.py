"""Mahalanobis nearest-neighbour matching on baseline covariates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, id_sort_key


class MatchingError(ValueError):
    pass


def _check_spd(cov_inv: np.ndarray) -> np.ndarray:
    cov_inv = np.atleast_2d(np.asarray(cov_inv, dtype=float))
    if cov_inv.shape[0] != cov_inv.shape[1] or not np.allclose(cov_inv, cov_inv.T):
        raise MatchingError("matrix must be square and symmetric")
    try:
        np.linalg.cholesky(cov_inv)
    except np.linalg.LinAlgError:
        raise MatchingError("matrix is not positive definite") from None
    return cov_inv


def mahalanobis(x, y, cov_inv) -> float:
    """``sqrt((x - y)' cov_inv (x - y))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    cov_inv = _check_spd(cov_inv)
    if x.shape != y.shape or cov_inv.shape[0] != x.shape[0]:
        raise MatchingError("dimension mismatch")
    d = x - y
    return float(np.sqrt(max(d @ cov_inv @ d, 0.0)))


def pooled_covariance(*groups: np.ndarray) -> np.ndarray:
    """Covariance over all rows of ``groups``, ridged when near-singular."""
    X = np.vstack([np.atleast_2d(np.asarray(g, dtype=float)) for g in groups])
    if X.shape[0] < 2:
        cov = np.eye(X.shape[1])
    else:
        cov = np.atleast_2d(np.cov(X, rowvar=False))
    scale = float(np.mean(np.diag(cov))) if cov.size else 0.0
    if scale <= 0:
        scale = 1.0
    if np.linalg.cond(cov) > 1e12:
        cov = cov + 1e-6 * scale * np.eye(cov.shape[0])
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise MatchingError("pooled covariance is singular after regularization") from None
    return cov


@dataclass
class MatchResult:
    """One control per treated unit; controls may repeat."""

    pairs: list[tuple[str, str, float]]
    pooled_covariance: np.ndarray

    @property
    def retained_controls(self) -> list[str]:
        """Distinct matched controls, in id order."""
        return sorted({c for _, c, _ in self.pairs}, key=id_sort_key)

    @property
    def cov_inv(self) -> np.ndarray:
        return np.linalg.inv(self.pooled_covariance)


def nn_match(treated, controls, treated_ids=None, control_ids=None) -> MatchResult:
    """Match every treated row to its nearest control row.

    Ties go to the smallest control id.  Ids default to row positions
    (``"0"``, ``"1"``, ...).
    """
    T = np.atleast_2d(np.asarray(treated, dtype=float))
    C = np.atleast_2d(np.asarray(controls, dtype=float))
    if T.shape[0] < 1 or C.shape[0] < 1:
        raise MatchingError("need at least one treated and one control unit")
    if T.shape[1] != C.shape[1]:
        raise MatchingError("treated and control covariates differ in dimension")
    tids = [str(i) for i in range(len(T))] if treated_ids is None else [str(i) for i in treated_ids]
    cids = [str(i) for i in range(len(C))] if control_ids is None else [str(i) for i in control_ids]
    if len(tids) != len(T) or len(cids) != len(C):
        raise MatchingError("id lists do not match the covariate rows")
    cov = pooled_covariance(T, C)
    chol = np.linalg.cholesky(np.linalg.inv(cov))
    # whitening turns the Mahalanobis metric into a Euclidean one
    Tw, Cw = T @ chol, C @ chol
    order = sorted(range(len(cids)), key=lambda j: id_sort_key(cids[j]))
    Cw = Cw[order]
    pairs = []
    for i in range(len(T)):
        d2 = np.sum((Cw - Tw[i]) ** 2, axis=1)
        j = int(np.argmin(d2))
        pairs.append((tids[i], cids[order[j]], float(np.sqrt(max(d2[j], 0.0)))))
    return MatchResult(pairs, cov)


def match_cohort(cohort: Cohort, columns=None) -> MatchResult:
    """Match all treated units of ``cohort`` to untreated ones on baseline covariates."""
    idx = (list(range(len(cohort.baseline_names))) if columns is None
           else [cohort.baseline_names.index(c) for c in columns])
    tr = [u for u in cohort if u.treated]
    co = [u for u in cohort if not u.treated]
    return nn_match(np.array([u.baseline[idx] for u in tr]).reshape(len(tr), len(idx)),
                    np.array([u.baseline[idx] for u in co]).reshape(len(co), len(idx)),
                    [u.unit_id for u in tr], [u.unit_id for u in co])


@dataclass
class BalanceRow:
    covariate: str
    mean_treated: float
    mean_control: float
    smd: float


def balance_table(treated, controls, names=None) -> list[BalanceRow]:
    """Means per group and standardized mean differences, column by column.

    The pooled sd is ``sqrt((var_T + var_C) / 2)``; a zero pooled sd gives
    an undefined (NaN) difference.
    """
    T = np.atleast_2d(np.asarray(treated, dtype=float))
    C = np.atleast_2d(np.asarray(controls, dtype=float))
    if T.shape[0] < 1 or C.shape[0] < 1:
        raise MatchingError("both groups must be non-empty")
    if T.shape[1] != C.shape[1]:
        raise MatchingError("groups differ in dimension")
    names = [f"x{j + 1}" for j in range(T.shape[1])] if names is None else list(names)
    vt = T.var(axis=0, ddof=1) if len(T) > 1 else np.zeros(T.shape[1])
    vc = C.var(axis=0, ddof=1) if len(C) > 1 else np.zeros(C.shape[1])
    sd = np.sqrt((vt + vc) / 2)
    mt, mc = T.mean(axis=0), C.mean(axis=0)
    rows = []
    for j, name in enumerate(names):
        smd = (mt[j] - mc[j]) / sd[j] if sd[j] > 0 else float("nan")
        rows.append(BalanceRow(name, float(mt[j]), float(mc[j]), float(smd)))
    return rows
